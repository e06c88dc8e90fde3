"""Hand-built scenes, cameras and pose proposals for demos and tests.

``python -m scenepose.demo OUTDIR`` writes a complete input set for the CLI.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np

from .camera import Camera, CameraExtrinsics, CameraIntrinsics, world_to_pixel
from .skeleton import CATEGORIES, HEAD, L_ANKLE, PELVIS, R_ANKLE, Pose3D, Pose3DLibrary, PoseClassLibrary, template_pose
from .voxels import LabelInfo, SceneVoxelGrid

FLOOR, BED, WALL, CHAIR = 1, 2, 3, 4
LABELS = {
    FLOOR: LabelInfo("floor", True, True),
    BED: LabelInfo("bed", True, True),
    WALL: LabelInfo("wall", True, False),
    CHAIR: LabelInfo("chair", True, True),
}
FLOOR_LAYERS = 2


def flat_floor(dims=(80, 80, 110), voxel_size=0.02) -> SceneVoxelGrid:
    """Empty room with a floor ``FLOOR_LAYERS`` voxels thick; z is up."""
    scene = SceneVoxelGrid.empty(dims, LABELS, voxel_size=voxel_size, name="flat_floor")
    return scene.with_box((0, 0, 0), (dims[0], dims[1], FLOOR_LAYERS), FLOOR)


def floor_with_bed(dims=(80, 80, 110), bed_height=23) -> SceneVoxelGrid:
    """Floor plus a bed cuboid spanning the back half of the room."""
    nx, ny, _ = dims
    s = flat_floor(dims).with_box((10, ny // 2, FLOOR_LAYERS), (nx - 10, ny - 4, FLOOR_LAYERS + bed_height), BED)
    return SceneVoxelGrid(s.labels, s.label_table, s.voxel_size, s.origin, s.up_axis, "floor_bed")


def floor_with_cavity(dims=(80, 80, 110), opening=30) -> SceneVoxelGrid:
    """Floor plus a wall with a full-height rectangular gap of ``opening`` voxels."""
    nx, ny, nz = dims
    mid = ny // 2
    gap_lo = (nx - opening) // 2
    s = flat_floor(dims)
    s = s.with_box((0, mid, FLOOR_LAYERS), (gap_lo, mid + 4, nz), WALL)
    s = s.with_box((gap_lo + opening, mid, FLOOR_LAYERS), (nx, mid + 4, nz), WALL)
    return SceneVoxelGrid(s.labels, s.label_table, s.voxel_size, s.origin, s.up_axis, "floor_cavity")


def horizontal_camera(scene: SceneVoxelGrid, height=1.0, back=1.5, f=500.0, size=(640, 480)) -> Camera:
    """Camera at ``height`` meters looking along +y, ``back`` meters before the scene."""
    rot = np.array([[1.0, 0, 0], [0, 0, 1.0], [0, -1.0, 0]])
    nx = scene.dims[0]
    x = scene.origin[0] + nx * scene.voxel_size / 2
    t = np.array([x, scene.origin[1] - back, scene.origin[2] + height])
    w, h = size
    return Camera(CameraIntrinsics(f, w / 2, h / 2), CameraExtrinsics(rot, t, 2), name="cam0")


def world_pose(category: str, height: float | None = None) -> np.ndarray:
    """Template pose turned to face -y (toward the demo camera), rescaled to ``height``."""
    p = template_pose(category) * np.array([-1.0, -1.0, 1.0])
    if height is not None:
        p = p * (height / (p[HEAD, 2] - min(p[R_ANKLE, 2], p[L_ANKLE, 2])))
    return p


def standing_at(scene: SceneVoxelGrid, i, j, height=1.65, lift=0.0) -> Pose3D:
    """Standing pose with ankles at voxel column (i, j) on top of the floor plus ``lift`` m."""
    p = world_pose("standing", height)
    top = scene.origin[2] + FLOOR_LAYERS * scene.voxel_size
    base = scene.voxel_to_world([i, j, 0])
    shift = np.array([base[0], base[1], top + scene.voxel_size / 2 + lift - p[R_ANKLE, 2]])
    return Pose3D(p + shift, "standing")


def sitting_at(scene: SceneVoxelGrid, i, j, seat_top: int, height=1.2, lift=0.0) -> Pose3D:
    """Sitting pose with the pelvis two voxels above seat layer index ``seat_top``."""
    p = world_pose("sitting", height)
    c = scene.voxel_to_world([i, j, seat_top + 2])
    return Pose3D(p + np.array([c[0], c[1], c[2] + lift]), "sitting")


def proposal(pose: Pose3D, camera: Camera, pid: str, class_id: int | None = None) -> dict:
    """Pose JSONL entry: projected joints with exact depth offsets."""
    uvd = world_to_pixel(pose.joints, camera.extrinsics, camera.intrinsics)
    row = {"id": pid, "joints2d": uvd[:, :2].tolist(), "depth_offsets": (uvd[:, 2] - uvd[PELVIS, 2]).tolist(),
           "category": pose.category}
    if class_id is not None:
        row["class"] = class_id
    return row


def class_library(seed: int = 7) -> PoseClassLibrary:
    """30 gesture classes: 1-15 standing, 16-30 sitting, built from jittered templates."""
    rng = np.random.default_rng(seed)
    poses, cats = [], []
    for cat in CATEGORIES:
        base = template_pose(cat)
        for _ in range(15):
            p = base.copy()
            p[11:] += rng.normal(0, 0.06, size=(6, 3))
            p[1:7] += rng.normal(0, 0.02, size=(6, 3))
            poses.append(p)
            cats.append(cat)
    return PoseClassLibrary.from_poses(poses, cats)


def to_camera_frame(p: np.ndarray) -> np.ndarray:
    """World (z up, facing +y) to the y-down library frame."""
    return np.stack([p[:, 0], -p[:, 2], p[:, 1]], axis=1)


def exemplar_library(n: int = 50, seed: int = 11) -> Pose3DLibrary:
    rng = np.random.default_rng(seed)
    poses, cats = [], []
    for i in range(n):
        cat = CATEGORIES[i % 2]
        p = template_pose(cat)
        p[1:] += rng.normal(0, 0.05, size=(16, 3))
        poses.append(to_camera_frame(p))
        cats.append(cat)
    return Pose3DLibrary(np.stack(poses), tuple(cats))


def write_demo(outdir) -> dict:
    """Write scene, labels, camera, class library and proposals for a CLI demo."""
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    scene = floor_with_bed()
    camera = horizontal_camera(scene)
    scene.save(out / "scene.svx", out / "labels.json")
    (out / "camera.json").write_text(json.dumps(camera.to_dict(), indent=1))
    (out / "classes.json").write_text(json.dumps(class_library().to_json()))
    rows = []
    for k, i in enumerate(range(15, 65, 10)):
        rows.append(proposal(standing_at(scene, i, 20, lift=0.08), camera, f"stand{k}", class_id=1 + k))
        rows.append(proposal(sitting_at(scene, i, 58, FLOOR_LAYERS + 22, lift=0.1), camera, f"sit{k}",
                             class_id=16 + k))
    (out / "poses.jsonl").write_text("".join(json.dumps(r) + "\n" for r in rows))
    lib = exemplar_library()
    (out / "library3d.jsonl").write_text("".join(
        json.dumps({"id": f"ex{i}", "joints3d": p.tolist(), "category": c}) + "\n"
        for i, (p, c) in enumerate(zip(lib.poses, lib.categories))))
    (out / "config.toml").write_text("t_f = 5\nt_s = 10.0\nsupport_proximity = 8\nsearch_radius_m = 0.3\n"
                                     "bone_radius = 2\n")
    return {"scene": str(out / "scene.svx"), "proposals": len(rows)}


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description="Write demo inputs for the scenepose CLI.")
    ap.add_argument("outdir")
    info = write_demo(ap.parse_args(argv).outdir)
    print(f"wrote {info['proposals']} proposals and scene {info['scene']}")


if __name__ == "__main__":
    main()
