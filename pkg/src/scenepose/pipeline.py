"""End-to-end pose synthesis, geometry scoring and record projection."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .camera import Camera, estimate_pose_depth, lift_pose, world_to_camera
from .constraints import CheckResult, ConstraintConfig, SceneConstraints, adjust_pose, check_pose
from .errors import FormatError, ScenePoseError
from .skeleton import (
    BONES,
    HEAD,
    L_ANKLE,
    PELVIS,
    R_ANKLE,
    Pose3D,
    Pose3DLibrary,
    PoseClassLibrary,
    PoseEntry,
    assign_pose_class,
    map_2d_to_3d,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class HeightPrior:
    """Gaussian human-height priors (meters), clamped at mean +/- clamp_sigma * std."""

    standing: tuple = (1.65, 0.10)
    sitting: tuple = (1.20, 0.10)
    clamp_sigma: float = 3.0

    def __post_init__(self):
        for mean, std in (self.standing, self.sitting):
            if not std > 0 or not mean - self.clamp_sigma * std > 0:
                raise ValueError("height prior needs std > 0 and a positive lower clamp")

    def bounds(self, category: str) -> tuple:
        """Clamp interval; rounded so 1.65 - 3 * 0.1 gives 1.35, not 1.3499999999999999."""
        mean, std = getattr(self, category)
        return round(mean - self.clamp_sigma * std, 12), round(mean + self.clamp_sigma * std, 12)


def sample_height(
    category: str,
    prior: HeightPrior = HeightPrior(),
    rng: np.random.Generator | None = None,
    size: int | None = None,
):
    """Clamped Gaussian height draw; an array of draws when ``size`` is given."""
    rng = np.random.default_rng() if rng is None else rng
    mean, std = getattr(prior, category)
    lo, hi = prior.bounds(category)
    draws = np.clip(rng.normal(mean, std, size=size), lo, hi)
    return float(draws) if size is None else draws


# --------------------------------------------------------------------------
# records

RECORD_KEYS = (
    "scene_id", "camera_id", "proposal_id", "class", "category", "height", "depth",
    "joints3d", "joints2d", "r_f", "r_s", "status", "reason", "seed",
)


@dataclass(eq=False)
class AffordanceRecord:
    scene_id: str
    camera_id: str
    proposal_id: str
    class_id: int | None
    category: str | None
    height: float | None
    depth: float | None
    pose: Pose3D | None
    joints2d: list | None
    r_f: int | None
    r_s: float | None
    status: str
    reason: str | None
    seed: int

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"

    def to_json(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "camera_id": self.camera_id,
            "proposal_id": self.proposal_id,
            "class": self.class_id,
            "category": self.category,
            "height": self.height,
            "depth": self.depth,
            "joints3d": None if self.pose is None else self.pose.joints.tolist(),
            "joints2d": self.joints2d,
            "r_f": self.r_f,
            "r_s": self.r_s,
            "status": self.status,
            "reason": self.reason,
            "seed": self.seed,
        }

    def to_line(self) -> str:
        return json.dumps(self.to_json(), allow_nan=False)

    @classmethod
    def from_json(cls, obj: dict) -> "AffordanceRecord":
        missing = [k for k in RECORD_KEYS if k not in obj]
        if missing:
            raise FormatError(f"record lacks fields {missing}")
        try:
            pose = None if obj["joints3d"] is None else Pose3D(np.asarray(obj["joints3d"], float), obj["category"])
        except (TypeError, ValueError) as exc:
            raise FormatError(f"bad record pose: {exc}") from exc
        return cls(
            obj["scene_id"], obj["camera_id"], obj["proposal_id"], obj["class"], obj["category"],
            obj["height"], obj["depth"], pose, obj["joints2d"], obj["r_f"], obj["r_s"],
            obj["status"], obj["reason"], obj["seed"],
        )


def project_record(record: AffordanceRecord | Pose3D, camera: Camera) -> dict:
    """Pixel positions of a pose's joints and bones; joints behind the camera are null."""
    pose = record.pose if isinstance(record, AffordanceRecord) else record
    if pose is None:
        raise ValueError("record has no pose")
    cam = world_to_camera(pose.joints, camera.extrinsics)
    behind = cam[:, 2] <= 0
    k = camera.intrinsics
    joints = []
    for c, b in zip(cam, behind):
        joints.append(None if b else [k.f * c[0] / c[2] + k.ox, k.f * c[1] / c[2] + k.oy])
    bones = [None if behind[a] or behind[b] else [joints[a], joints[b]] for a, b in BONES]
    return {"joints": joints, "behind": behind.tolist(), "bones": bones}


# --------------------------------------------------------------------------
# synthesis


def gesture_offsets_from_library(joints2d, lib: Pose3DLibrary, height: float, rotations: int) -> np.ndarray:
    """Per-joint depth offsets (relative to the pelvis) taken from the nearest library pose."""
    mapped = map_2d_to_3d(joints2d, lib, rotations)
    rot = mapped.rotated()
    extent = max(rot[R_ANKLE, 1], rot[L_ANKLE, 1]) - rot[HEAD, 1]
    if not extent > 0:
        raise ScenePoseError("library pose has no vertical extent")
    return (rot[:, 2] - rot[PELVIS, 2]) * (height / extent)


def gesture_offsets_from_world(joints3d, camera: Camera, height: float) -> np.ndarray:
    """Depth offsets of a world-space gesture as seen by ``camera``, rescaled to ``height``."""
    up = np.asarray(joints3d)[:, camera.extrinsics.gravity_row]
    extent = up[HEAD] - min(up[R_ANKLE], up[L_ANKLE])
    if not extent > 0:
        raise ScenePoseError("gesture has no vertical extent")
    z = world_to_camera(joints3d, camera.extrinsics)[:, 2]
    return (z - z[PELVIS]) * (height / extent)


def resolve_category(entry: PoseEntry, classes: PoseClassLibrary | None) -> str:
    if entry.category is not None:
        return entry.category
    if entry.class_id is None or classes is None:
        raise ScenePoseError("category unresolved: no category and no class library entry")
    return classes.category(entry.class_id)


def lift_proposal(
    entry: PoseEntry,
    category: str,
    height: float,
    camera: Camera,
    library3d: Pose3DLibrary | None = None,
    rotations: int = 36,
) -> tuple[Pose3D, float | None]:
    """World pose for a proposal and the pelvis depth used (None if already 3D).

    Depth offsets come from the entry itself, else from its world-space
    gesture, else from the nearest pose in ``library3d``.
    """
    if entry.joints2d is None:
        return Pose3D(entry.joints3d, category), None
    if entry.depth_offsets is not None:
        offsets = entry.depth_offsets
    elif entry.joints3d is not None:
        offsets = gesture_offsets_from_world(entry.joints3d, camera, height)
    elif library3d is not None:
        offsets = gesture_offsets_from_library(entry.joints2d, library3d, height, rotations)
    else:
        raise ScenePoseError("no depth offsets, 3D gesture or 3D pose library for proposal")
    k, e = camera.intrinsics, camera.extrinsics
    depth = estimate_pose_depth(entry.joints2d, height, e, k)
    return lift_pose(entry.joints2d, offsets, depth, e, k, category), depth


@dataclass
class SynthesisSummary:
    proposed: int = 0
    accepted: int = 0
    discarded_no_support: int = 0
    discarded_degenerate: int = 0
    seed: int = 0

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True, eq=False)
class SynthesisInputs:
    constraints: SceneConstraints
    camera: Camera
    classes: PoseClassLibrary | None = None
    library3d: Pose3DLibrary | None = None
    cfg: ConstraintConfig = field(default_factory=ConstraintConfig)
    prior: HeightPrior = field(default_factory=HeightPrior)
    rotations: int = 36


def _synthesize_one(inp: SynthesisInputs, entry: PoseEntry, index: int, seed: int) -> tuple[AffordanceRecord, str]:
    """Process one proposal; returns the record and its outcome kind."""
    rng = np.random.default_rng([seed, index])
    cam = inp.camera
    rec = AffordanceRecord(
        inp.constraints.scene.name, cam.name, entry.id, entry.class_id, entry.category,
        None, None, None, None, None, None, "discarded", None, seed,
    )
    try:
        category = resolve_category(entry, inp.classes)
        rec.category = category
        rec.height = sample_height(category, inp.prior, rng)
        pose, rec.depth = lift_proposal(entry, category, rec.height, cam, inp.library3d, inp.rotations)
        if rec.class_id is None and inp.classes is not None:
            rec.class_id = assign_pose_class(pose, inp.classes)
        result = adjust_pose(pose, inp.constraints, inp.cfg)
    except ScenePoseError as exc:
        rec.reason = f"{type(exc).__name__}: {exc}" if type(exc) is not ScenePoseError else str(exc)
        return rec, "degenerate"
    rec.pose, rec.r_f, rec.r_s = result.pose, result.r_f, result.r_s
    if result.accepted:
        check = check_pose(result.pose, inp.constraints, inp.cfg)
        if check.ok:
            rec.status = "accepted"
        else:
            rec.reason = "failed_recheck"
    else:
        rec.reason = result.reason
    rec.joints2d = project_record(rec.pose, cam)["joints"]
    return rec, "accepted" if rec.accepted else "no_support"


def synthesize(
    inp: SynthesisInputs, proposals: Sequence[PoseEntry], seed: int = 0, workers: int = 1
) -> tuple[list[AffordanceRecord], SynthesisSummary]:
    """Turn pose proposals into accepted or discarded records, in input order.

    Each proposal draws from its own generator seeded by ``(seed, index)``, so
    the result does not depend on ``workers``.
    """
    jobs = list(enumerate(proposals))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _synthesize_one(inp, job[1], job[0], seed), jobs))
    else:
        results = [_synthesize_one(inp, e, i, seed) for i, e in jobs]
    summary = SynthesisSummary(proposed=len(results), seed=seed)
    for _, kind in results:
        if kind == "accepted":
            summary.accepted += 1
        elif kind == "degenerate":
            summary.discarded_degenerate += 1
        else:
            summary.discarded_no_support += 1
    return [rec for rec, _ in results], summary


# --------------------------------------------------------------------------
# scoring


@dataclass(frozen=True)
class GeometryScore:
    score: float
    count: int
    checks: tuple
    warning: str | None = None

    def to_json(self, ids: Sequence[str] | None = None) -> dict:
        ids = ids or [str(i) for i in range(self.count)]
        return {
            "geometry_score": self.score,
            "count": self.count,
            "warning": self.warning,
            "poses": [
                {"id": pid, "free_ok": c.free_ok, "support_ok": c.support_ok, "r_f": c.r_f,
                 "r_s": c.r_s, "proximity": c.proximity}
                for pid, c in zip(ids, self.checks)
            ],
        }


def geometry_score(poses: Sequence[Pose3D], sc: SceneConstraints, cfg: ConstraintConfig = ConstraintConfig()) -> GeometryScore:
    """Fraction of poses passing both constraints; an empty set scores 0 with a warning."""
    checks: list[CheckResult] = [check_pose(p, sc, cfg) for p in poses]
    if not checks:
        log.warning("geometry score of an empty pose set is defined as 0")
        return GeometryScore(0.0, 0, (), "empty pose set")
    passed = sum(c.ok for c in checks)
    return GeometryScore(passed / len(checks), len(checks), tuple(checks))

