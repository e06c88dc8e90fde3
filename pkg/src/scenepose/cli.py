"""Command-line entry point: ``scenepose <subcommand> ...``.

Exit codes: 0 success, 2 invalid input, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .camera import Camera
from .constraints import ConstraintConfig, SceneConstraints, adjust_pose
from .errors import FormatError, ScenePoseError
from .heatmaps import LocationHeatmap, render_depth_heatmap
from .pipeline import (
    AffordanceRecord,
    SynthesisInputs,
    geometry_score,
    lift_proposal,
    project_record,
    resolve_category,
    sample_height,
    synthesize,
)
from .skeleton import Pose3D, Pose3DLibrary, PoseClassLibrary, PoseEntry, parse_pose_entry, read_pose_jsonl
from .voxels import SceneVoxelGrid

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("scenepose")

EXIT_OK, EXIT_INPUT, EXIT_IO = 0, 2, 3
WORKERS_ENV = "SCENEPOSE_WORKERS"


class InputError(Exception):
    """Bad command-line input; maps to exit code 2."""


class OutputError(Exception):
    """Failure writing results; maps to exit code 3."""


# --------------------------------------------------------------------------
# helpers


def write_atomic(path, data: str | bytes) -> None:
    """Write via a temp file in the target directory, then rename over ``path``."""
    path = Path(path)
    mode = "wb" if isinstance(data, bytes) else "w"
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc}") from exc


def _require(path: str | None, flag: str) -> Path:
    if path is None:
        raise InputError(f"{flag} is required")
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{flag}: file not found: {p}")
    return p


def _load(what: str, loader, *paths):
    try:
        return loader(*paths)
    except (FormatError, ValueError) as exc:
        raise InputError(f"{what} {paths[0]}: {exc}") from exc
    except OSError as exc:
        raise InputError(f"{what} {paths[0]}: {exc}") from exc


def load_config_file(path) -> dict:
    p = _require(path, "--config")
    text = p.read_text()
    try:
        data = tomllib.loads(text) if p.suffix == ".toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise InputError(f"--config {p}: {exc}") from exc
    if not isinstance(data, dict):
        raise InputError(f"--config {p}: expected a table of settings")
    return data


def constraint_config(args) -> ConstraintConfig:
    base = ConstraintConfig()
    try:
        if args.config:
            base = ConstraintConfig.from_mapping(load_config_file(args.config))
        return base.override(
            t_f=args.tf,
            t_s=args.ts,
            support_proximity=args.support_proximity,
            search_radius=args.search_radius,
            bone_radius=args.bone_radius,
        )
    except (TypeError, ValueError) as exc:
        raise InputError(f"bad constraint configuration: {exc}") from exc


def worker_count(args) -> int:
    if args.workers is not None:
        return max(1, args.workers)
    env = os.environ.get(WORKERS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise InputError(f"{WORKERS_ENV} must be an integer, got {env!r}") from exc
    return os.cpu_count() or 1


def load_scene(args) -> SceneVoxelGrid:
    return _load("scene", SceneVoxelGrid.load, _require(args.scene, "--scene"), _require(args.labels, "--labels"))


def load_poses(path, flag="--poses") -> list[PoseEntry]:
    return _load("poses", read_pose_jsonl, _require(path, flag))


def load_classes(path) -> PoseClassLibrary | None:
    return None if path is None else _load("class library", PoseClassLibrary.load, _require(path, "--classes"))


def load_library3d(path) -> Pose3DLibrary | None:
    return None if path is None else _load("3D pose library", Pose3DLibrary.load, _require(path, "--library3d"))


def world_poses(entries, classes) -> list[tuple[str, Pose3D]]:
    out = []
    for e in entries:
        if e.joints3d is None:
            raise InputError(f"pose {e.id}: joints3d required")
        try:
            out.append((e.id, Pose3D(e.joints3d, resolve_category(e, classes))))
        except ScenePoseError as exc:
            raise InputError(f"pose {e.id}: {type(exc).__name__}: {exc}") from exc
    return out


def read_scored_poses(path, classes, include_discarded: bool) -> list[tuple[str, Pose3D]]:
    """Poses to score from a records file or a plain pose JSONL file."""
    p = _require(path, "--records")
    out = []
    with open(p) as fh:
        for n, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
                if "status" in obj:
                    rec = AffordanceRecord.from_json(obj)
                    if rec.pose is not None and (rec.accepted or include_discarded):
                        out.append((rec.proposal_id, rec.pose))
                else:
                    out.extend(world_poses([parse_pose_entry(obj, n)], classes))
            except (json.JSONDecodeError, FormatError, TypeError, AttributeError) as exc:
                raise InputError(f"{p}:{n}: schema mismatch ({exc})") from exc
    return out


def jsonl(rows) -> str:
    return "".join(json.dumps(r, allow_nan=False) + "\n" for r in rows)


# --------------------------------------------------------------------------
# subcommands


def cmd_synthesize(args) -> int:
    scene = load_scene(args)
    camera = _load("camera", Camera.load, _require(args.camera, "--camera"))
    proposals = load_poses(args.poses)
    classes = load_classes(args.classes)
    library3d = load_library3d(args.library3d)
    cfg = constraint_config(args)
    inp = SynthesisInputs(SceneConstraints(scene), camera, classes, library3d, cfg, rotations=args.rotations)
    records, summary = synthesize(inp, proposals, seed=args.seed, workers=worker_count(args))
    out = Path(args.out)
    write_atomic(out, "".join(r.to_line() + "\n" for r in records))
    summary_path = Path(args.summary) if args.summary else out.with_name(out.name + ".summary.json")
    text = json.dumps(summary.to_json(), indent=1) + "\n"
    write_atomic(summary_path, text)
    print(json.dumps(summary.to_json()) if args.json else
          f"{summary.accepted}/{summary.proposed} accepted -> {out}")
    return EXIT_OK


def cmd_score(args) -> int:
    scene = load_scene(args)
    classes = load_classes(args.classes)
    poses = read_scored_poses(args.records, classes, args.include_discarded)
    report = geometry_score([p for _, p in poses], SceneConstraints(scene), constraint_config(args))
    data = report.to_json([pid for pid, _ in poses])
    if args.json:
        print(json.dumps(data))
    else:
        for row in data["poses"]:
            print(f"{row['id']}: free={'ok' if row['free_ok'] else 'FAIL'} "
                  f"support={'ok' if row['support_ok'] else 'FAIL'} r_f={row['r_f']} r_s={row['r_s']:.3f}")
        if report.warning:
            print(f"warning: {report.warning}")
        print(f"geometry score: {report.score:.4f} ({report.count} poses)")
    return EXIT_OK


def cmd_validate(args) -> int:
    checks = []
    if args.scene or args.labels:
        s = load_scene(args)
        checks.append(f"scene {args.scene}: {s.dims} voxels of {s.voxel_size} m, {len(s.label_table)} labels")
    if args.camera:
        _load("camera", Camera.load, _require(args.camera, "--camera"))
        checks.append(f"camera {args.camera}: ok")
    if args.poses:
        checks.append(f"poses {args.poses}: {len(load_poses(args.poses))} entries")
    if args.classes:
        load_classes(args.classes)
        checks.append(f"classes {args.classes}: ok")
    if args.library3d:
        checks.append(f"library3d {args.library3d}: {len(load_library3d(args.library3d))} poses")
    if args.heatmap:
        hm = _load("heat map", LocationHeatmap.load, _require(args.heatmap, "--heatmap"))
        checks.append(f"heatmap {args.heatmap}: {hm.shape[0]}x{hm.shape[1]}")
    if args.records:
        checks.append(f"records {args.records}: {len(read_scored_poses(args.records, None, True))} poses")
    if not checks:
        raise InputError("nothing to validate")
    print(json.dumps({"ok": True, "checked": checks}) if args.json else "\n".join(checks))
    return EXIT_OK


def cmd_lift(args) -> int:
    camera = _load("camera", Camera.load, _require(args.camera, "--camera"))
    entries = load_poses(args.poses)
    classes = load_classes(args.classes)
    library3d = load_library3d(args.library3d)
    rows = []
    for i, e in enumerate(entries):
        if e.joints2d is None:
            raise InputError(f"pose {e.id}: joints2d required")
        try:
            category = resolve_category(e, classes)
            h = args.height if args.height is not None else sample_height(
                category, rng=np.random.default_rng([args.seed, i]))
            pose, depth = lift_proposal(e, category, h, camera, library3d, args.rotations)
        except ScenePoseError as exc:
            raise InputError(f"pose {e.id}: {type(exc).__name__}: {exc}") from exc
        rows.append({"id": e.id, "joints3d": pose.joints.tolist(), "category": category,
                     "class": e.class_id, "height": h, "depth": depth})
    write_atomic(args.out, jsonl(rows))
    print(f"lifted {len(rows)} poses -> {args.out}")
    return EXIT_OK


def cmd_adjust(args) -> int:
    sc = SceneConstraints(load_scene(args))
    cfg = constraint_config(args)
    rows = []
    for pid, pose in world_poses(load_poses(args.poses), load_classes(args.classes)):
        res = adjust_pose(pose, sc, cfg)
        rows.append({"id": pid, "joints3d": res.pose.joints.tolist(), "category": pose.category,
                     "status": res.status, "reason": res.reason, "translation": res.translation.tolist(),
                     "r_f": res.r_f, "r_s": res.r_s})
    write_atomic(args.out, jsonl(rows))
    print(f"adjusted {len(rows)} poses -> {args.out}")
    return EXIT_OK


def cmd_render_heatmap(args) -> int:
    camera = _load("camera", Camera.load, _require(args.camera, "--camera"))
    poses = read_scored_poses(args.poses, load_classes(args.classes), True)
    maps = []
    for pid, pose in poses:
        proj = project_record(pose, camera)
        if any(proj["behind"]):
            raise InputError(f"pose {pid}: joints behind the camera")
        uv = np.array(proj["joints"])
        depth = (pose.joints - camera.extrinsics.translation) @ camera.extrinsics.rotation[:, 2]
        maps.append(render_depth_heatmap(uv, depth, (args.height, args.width)))
    arr = np.stack(maps) if maps else np.zeros((0, args.height, args.width))
    out = Path(args.out)
    try:
        with tempfile.NamedTemporaryFile(dir=out.parent or ".", suffix=".npy", delete=False) as fh:
            np.save(fh, arr)
        os.replace(fh.name, out)
    except OSError as exc:
        raise OutputError(f"cannot write {out}: {exc}") from exc
    print(f"rendered {len(maps)} depth heat maps -> {out}")
    return EXIT_OK


def cmd_project(args) -> int:
    camera = _load("camera", Camera.load, _require(args.camera, "--camera"))
    poses = read_scored_poses(args.poses, load_classes(args.classes), True)
    rows = [{"id": pid, **project_record(pose, camera)} for pid, pose in poses]
    write_atomic(args.out, jsonl(rows))
    print(f"projected {len(rows)} poses -> {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--workers", type=int, default=None,
                   help=f"worker threads (default ${WORKERS_ENV} or CPU count)")
    g.add_argument("--config", help="TOML or JSON file with constraint settings")
    g.add_argument("--json", action="store_true", help="machine-readable output on stdout")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    cons = argparse.ArgumentParser(add_help=False)
    c = cons.add_argument_group("constraint options (override --config)")
    c.add_argument("--tf", type=int, help="max intersecting body voxels (default 5)")
    c.add_argument("--ts", type=float, help="min support response (default 100)")
    c.add_argument("--support-proximity", type=int, help="score-time support distance in voxels (default 8)")
    c.add_argument("--search-radius", type=float, help="adjustment window half-size in meters (default 0.3)")
    c.add_argument("--bone-radius", type=int, help="bone dilation radius in voxels (default 2)")

    scene = argparse.ArgumentParser(add_help=False)
    scene.add_argument("--scene", help="scene voxel grid (.svx)")
    scene.add_argument("--labels", help="label table JSON for the scene")

    p = argparse.ArgumentParser(prog="scenepose", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synthesize", parents=[common, cons, scene], help="run the full synthesis pipeline")
    s.add_argument("--camera", required=True, help="camera JSON")
    s.add_argument("--poses", required=True, help="pose proposals (JSONL)")
    s.add_argument("--classes", help="pose class library JSON")
    s.add_argument("--library3d", help="3D exemplar poses (JSONL) for 2D->3D retrieval")
    s.add_argument("--rotations", type=int, default=36, help="view rotations for retrieval (default 36)")
    s.add_argument("--out", required=True, help="output records JSONL")
    s.add_argument("--summary", help="summary JSON path (default <out>.summary.json)")
    s.set_defaults(func=cmd_synthesize)

    s = sub.add_parser("score", parents=[common, cons, scene], help="geometry score of records or poses")
    s.add_argument("--records", required=True, help="records or pose JSONL with joints3d")
    s.add_argument("--classes", help="pose class library JSON (category lookup)")
    s.add_argument("--include-discarded", action="store_true", help="also score discarded records")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("validate", parents=[common, scene], help="check input files parse")
    for flag in ("--camera", "--poses", "--classes", "--library3d", "--heatmap", "--records"):
        s.add_argument(flag, help=f"file to validate for {flag[2:]}")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("lift", parents=[common], help="lift 2D poses to world space")
    s.add_argument("--camera", required=True, help="camera JSON")
    s.add_argument("--poses", required=True, help="pose JSONL with joints2d")
    s.add_argument("--classes", help="pose class library JSON")
    s.add_argument("--library3d", help="3D exemplar poses (JSONL)")
    s.add_argument("--rotations", type=int, default=36, help="view rotations for retrieval (default 36)")
    s.add_argument("--height", type=float, help="fixed human height in meters (default: sampled)")
    s.add_argument("--out", required=True, help="output pose JSONL")
    s.set_defaults(func=cmd_lift)

    s = sub.add_parser("adjust", parents=[common, cons, scene], help="adjust world poses to supported spots")
    s.add_argument("--poses", required=True, help="pose JSONL with joints3d")
    s.add_argument("--classes", help="pose class library JSON")
    s.add_argument("--out", required=True, help="output pose JSONL")
    s.set_defaults(func=cmd_adjust)

    s = sub.add_parser("render-heatmap", parents=[common], help="rasterize depth heat maps (.npy)")
    s.add_argument("--camera", required=True, help="camera JSON")
    s.add_argument("--poses", required=True, help="records or pose JSONL with joints3d")
    s.add_argument("--classes", help="pose class library JSON")
    s.add_argument("--width", type=int, required=True, help="image width in pixels")
    s.add_argument("--height", type=int, required=True, help="image height in pixels")
    s.add_argument("--out", required=True, help="output .npy of shape (n, height, width)")
    s.set_defaults(func=cmd_render_heatmap)

    s = sub.add_parser("project", parents=[common], help="project poses to image overlays")
    s.add_argument("--camera", required=True, help="camera JSON")
    s.add_argument("--poses", required=True, help="records or pose JSONL with joints3d")
    s.add_argument("--classes", help="pose class library JSON")
    s.add_argument("--out", required=True, help="output overlay JSONL")
    s.set_defaults(func=cmd_project)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
