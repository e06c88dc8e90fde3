"""17-joint skeleton, pose containers, pose-class library and 2D->3D retrieval."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DegeneratePose, EmptyLibrary, FormatError, UnknownClass

NUM_JOINTS = 17
JOINT_NAMES = (
    "pelvis", "r_hip", "r_knee", "r_ankle", "l_hip", "l_knee", "l_ankle",
    "spine", "thorax", "neck", "head",
    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder", "r_elbow", "r_wrist",
)
PELVIS, R_HIP, R_KNEE, R_ANKLE, L_HIP, L_KNEE, L_ANKLE = range(7)
SPINE, THORAX, NECK, HEAD = 7, 8, 9, 10

BONES = (
    (0, 1), (1, 2), (2, 3), (0, 4), (4, 5), (5, 6),
    (0, 7), (7, 8), (8, 9), (9, 10),
    (8, 11), (11, 12), (12, 13), (8, 14), (14, 15), (15, 16),
)
BONE_PARTS = (
    "pelvis-hip", "thigh", "shank/foot", "pelvis-hip", "thigh", "shank/foot",
    "torso", "torso", "torso", "head",
    "arm", "arm", "arm", "arm", "arm", "arm",
)
# Voxel part tags; "foot" marks the dilated ankle joints.
PART_TAGS = ("pelvis-hip", "thigh", "shank/foot", "torso", "head", "arm", "foot")
PART_BITS = {name: 1 << i for i, name in enumerate(PART_TAGS)}

CATEGORIES = ("standing", "sitting")
CONTACT_PARTS = {"sitting": ("pelvis-hip", "thigh"), "standing": ("foot",)}
BACKGROUND_CLASS = 31
NUM_CLASSES = 30


def check_category(category: str) -> str:
    if category not in CATEGORIES:
        raise ValueError(f"category must be one of {CATEGORIES}, got {category!r}")
    return category


@dataclass(frozen=True, eq=False)
class Pose3D:
    """World-space pose: joints of shape (17, 3) in meters."""

    joints: np.ndarray
    category: str = "standing"

    def __post_init__(self):
        j = np.array(self.joints, dtype=float)
        if j.shape != (NUM_JOINTS, 3):
            raise ValueError(f"pose must have shape (17, 3), got {j.shape}")
        if not np.all(np.isfinite(j)):
            raise ValueError("pose coordinates must be finite")
        check_category(self.category)
        j.setflags(write=False)
        object.__setattr__(self, "joints", j)

    @property
    def pelvis(self) -> np.ndarray:
        return self.joints[PELVIS]

    def translated(self, shift) -> "Pose3D":
        return Pose3D(self.joints + np.asarray(shift, dtype=float), self.category)


def _radii(centered: np.ndarray) -> np.ndarray:
    sq = centered[..., 0] * centered[..., 0]
    for axis in range(1, centered.shape[-1]):
        sq = sq + centered[..., axis] * centered[..., axis]
    return np.sqrt(sq)


def normalize_pose(p) -> np.ndarray:
    """Center on the pelvis and scale so the farthest joint sits at radius 1.

    Works for 2D or 3D joints and for batches of shape (..., 17, dim).
    """
    p = np.asarray(p, dtype=float)
    centered = p - p[..., PELVIS : PELVIS + 1, :]
    scale = np.max(_radii(centered), axis=-1)
    if np.any(scale == 0):
        raise DegeneratePose("all joints coincide")
    return centered / scale[..., None, None]


def skeleton_is_tree() -> bool:
    parent = {}
    for a, b in BONES:
        if b in parent or b == PELVIS:
            return False
        parent[b] = a
    return len(parent) == NUM_JOINTS - 1 and all(_reaches_root(j, parent) for j in range(NUM_JOINTS))


def _reaches_root(j: int, parent: dict) -> bool:
    seen = set()
    while j != PELVIS:
        if j in seen or j not in parent:
            return False
        seen.add(j)
        j = parent[j]
    return True


def template_pose(category: str) -> np.ndarray:
    """A nominal pose (meters, z up, facing +y) with the pelvis at the origin."""
    check_category(category)
    if category == "standing":
        j = [
            (0, 0, 0), (-0.12, 0, 0), (-0.12, 0, -0.45), (-0.12, 0, -0.88),
            (0.12, 0, 0), (0.12, 0, -0.45), (0.12, 0, -0.88),
            (0, 0, 0.25), (0, 0, 0.5), (0, 0, 0.6), (0, 0, 0.75),
            (0.18, 0, 0.5), (0.2, 0, 0.22), (0.2, 0, -0.02),
            (-0.18, 0, 0.5), (-0.2, 0, 0.22), (-0.2, 0, -0.02),
        ]
    else:
        j = [
            (0, 0, 0), (-0.12, 0, 0), (-0.12, 0.44, 0), (-0.12, 0.44, -0.44),
            (0.12, 0, 0), (0.12, 0.44, 0), (0.12, 0.44, -0.44),
            (0, -0.02, 0.25), (0, -0.03, 0.5), (0, -0.03, 0.6), (0, -0.02, 0.75),
            (0.18, -0.03, 0.5), (0.2, 0.05, 0.26), (0.2, 0.25, 0.2),
            (-0.18, -0.03, 0.5), (-0.2, 0.05, 0.26), (-0.2, 0.25, 0.2),
        ]
    return np.array(j, dtype=float)


# --------------------------------------------------------------------------
# pose-class library


@dataclass(frozen=True, eq=False)
class PoseClass:
    class_id: int
    center: np.ndarray
    category: str


class PoseClassLibrary:
    """The 30 gesture clusters; class 31 is reserved for background."""

    def __init__(self, classes: Iterable[PoseClass]):
        classes = sorted(classes, key=lambda c: c.class_id)
        ids = [c.class_id for c in classes]
        if ids != list(range(1, NUM_CLASSES + 1)):
            raise FormatError(f"class ids must cover 1..{NUM_CLASSES} exactly once")
        centers = np.stack([np.asarray(c.center, dtype=float) for c in classes])
        if centers.shape != (NUM_CLASSES, NUM_JOINTS, 3):
            raise FormatError(f"class centers must have shape (17, 3), got {centers.shape[1:]}")
        if np.max(np.abs(normalize_pose(centers) - centers)) > 1e-9:
            raise FormatError("class centers must be normalized poses")
        for c in classes:
            check_category(c.category)
        centers.setflags(write=False)
        self.centers = centers
        self.categories = tuple(c.category for c in classes)

    @classmethod
    def from_poses(cls, poses: Sequence, categories: Sequence[str]) -> "PoseClassLibrary":
        """Build a library from raw (unnormalized) representative poses."""
        return cls(
            PoseClass(i + 1, normalize_pose(p), cat) for i, (p, cat) in enumerate(zip(poses, categories))
        )

    @classmethod
    def load(cls, path) -> "PoseClassLibrary":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
            return cls(PoseClass(int(d["class"]), np.asarray(d["center"], float), d["category"]) for d in data)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, FormatError):
                raise
            raise FormatError(f"{path}: bad class library ({exc})") from exc

    def to_json(self) -> list[dict]:
        return [
            {"class": i + 1, "category": cat, "center": self.centers[i].tolist()}
            for i, cat in enumerate(self.categories)
        ]

    def category(self, class_id: int) -> str:
        if not (isinstance(class_id, (int, np.integer)) and 1 <= class_id <= NUM_CLASSES):
            raise UnknownClass(f"no pose class {class_id!r}")
        return self.categories[class_id - 1]


def pose_category(class_id: int, lib: PoseClassLibrary) -> str:
    return lib.category(class_id)


def assign_pose_class(p, lib: PoseClassLibrary) -> int:
    """Nearest class center to the normalized pose; ties go to the smallest id."""
    joints = p.joints if isinstance(p, Pose3D) else np.asarray(p, dtype=float)
    diff = lib.centers - normalize_pose(joints)[None]
    dist = np.sqrt(np.sum(diff * diff, axis=(1, 2)))
    return int(np.argmin(dist)) + 1


# --------------------------------------------------------------------------
# 2D -> 3D retrieval


@dataclass(frozen=True, eq=False)
class Pose3DLibrary:
    """Exemplar 3D poses in a camera-like frame: x right, y down, z forward."""

    poses: np.ndarray
    categories: tuple = ()

    def __post_init__(self):
        arr = np.asarray(self.poses, dtype=float).reshape(-1, NUM_JOINTS, 3)
        arr.setflags(write=False)
        object.__setattr__(self, "poses", arr)
        cats = tuple(self.categories) or ("standing",) * len(arr)
        if len(cats) != len(arr):
            raise ValueError("one category per library pose required")
        object.__setattr__(self, "categories", cats)

    def __len__(self) -> int:
        return len(self.poses)

    @classmethod
    def load(cls, path) -> "Pose3DLibrary":
        entries = read_pose_jsonl(path)
        if any(e.joints3d is None for e in entries):
            raise FormatError(f"{path}: every library pose needs joints3d")
        return cls(np.stack([e.joints3d for e in entries]) if entries else np.zeros((0, 17, 3)),
                   tuple(e.category or "standing" for e in entries))


def rotate_about_axis(p, theta, axis: int = 1) -> np.ndarray:
    """Rotate joints (..., 17, 3) by ``theta`` radians about one coordinate axis.

    ``theta`` broadcasts against the leading dimensions of ``p``.
    """
    p = np.asarray(p, dtype=float)
    theta = np.asarray(theta, dtype=float)[..., None]
    a, b = (axis + 1) % 3, (axis + 2) % 3
    c, s = np.cos(theta), np.sin(theta)
    pa, pb = p[..., a], p[..., b]
    out = np.broadcast_to(p, np.broadcast_shapes(p.shape, theta.shape + (3,))).copy()
    out[..., a] = pa * c - pb * s
    out[..., b] = pa * s + pb * c
    return out


def project_rotated(p, theta, axis: int = 1) -> np.ndarray:
    """Rotate about the vertical axis and drop depth, giving image-plane (x, y)."""
    return rotate_about_axis(p, theta, axis)[..., :2]


def rotation_grid(k: int) -> np.ndarray:
    return -math.pi + 2 * math.pi * np.arange(k) / k


@dataclass(frozen=True, eq=False)
class Mapped3D:
    index: int
    pose: np.ndarray
    theta: float
    distance: float
    category: str

    def rotated(self, axis: int = 1) -> np.ndarray:
        return rotate_about_axis(self.pose, self.theta, axis)


def map_2d_to_3d(
    q,
    lib: Pose3DLibrary,
    k: int = 36,
    rng: np.random.Generator | None = None,
    axis: int = 1,
    chunk: int = 1024,
) -> Mapped3D:
    """Nearest library pose (and view rotation) to a 2D pixel pose.

    With ``rng`` the ``k`` rotations are drawn uniformly from [-pi, pi)
    instead of the even grid. Ties resolve to the lowest (pose, rotation).
    """
    if len(lib) == 0:
        raise EmptyLibrary("3D pose library is empty")
    if k < 1:
        raise ValueError("rotation count must be >= 1")
    thetas = rotation_grid(k) if rng is None else rng.uniform(-math.pi, math.pi, size=k)
    query = normalize_pose(np.asarray(q, dtype=float)[:, :2])
    best = (math.inf, -1, -1)
    for start in range(0, len(lib), chunk):
        block = lib.poses[start : start + chunk]
        cand = normalize_pose(project_rotated(block[:, None], thetas[None, :], axis))
        diff = cand - query
        dist = np.sqrt(np.sum(diff * diff, axis=(-2, -1)))
        flat = int(np.argmin(dist))
        i, j = divmod(flat, k)
        if dist[i, j] < best[0]:
            best = (float(dist[i, j]), start + i, j)
    _, idx, j = best
    return Mapped3D(idx, lib.poses[idx], float(thetas[j]), best[0], lib.categories[idx])


# --------------------------------------------------------------------------
# pose JSONL


@dataclass(frozen=True, eq=False)
class PoseEntry:
    id: str
    joints2d: np.ndarray | None = None
    depth_offsets: np.ndarray | None = None
    joints3d: np.ndarray | None = None
    class_id: int | None = None
    category: str | None = None
    extra: dict | None = None


def _array(value, shape, what, line):
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"line {line}: {what} is not numeric") from exc
    if arr.shape != shape or not np.all(np.isfinite(arr)):
        raise FormatError(f"line {line}: {what} must have shape {shape}")
    return arr


def parse_pose_entry(obj: dict, line: int = 0) -> PoseEntry:
    if not isinstance(obj, dict):
        raise FormatError(f"line {line}: expected a JSON object")
    pid = obj.get("id", obj.get("proposal_id", str(line)))
    j2 = obj.get("joints2d")
    j3 = obj.get("joints3d")
    if j2 is None and j3 is None:
        raise FormatError(f"line {line}: one of joints2d/joints3d is required")
    offsets = obj.get("depth_offsets")
    cls_id = obj.get("class")
    if cls_id is not None and not (isinstance(cls_id, int) and 1 <= cls_id <= NUM_CLASSES):
        raise FormatError(f"line {line}: class must be an integer in 1..30")
    cat = obj.get("category")
    if cat is not None and cat not in CATEGORIES:
        raise FormatError(f"line {line}: unknown category {cat!r}")
    known = {"id", "proposal_id", "joints2d", "joints3d", "depth_offsets", "class", "category"}
    return PoseEntry(
        id=str(pid),
        joints2d=None if j2 is None else _array(j2, (NUM_JOINTS, 2), "joints2d", line),
        depth_offsets=None if offsets is None else _array(offsets, (NUM_JOINTS,), "depth_offsets", line),
        joints3d=None if j3 is None else _array(j3, (NUM_JOINTS, 3), "joints3d", line),
        class_id=cls_id,
        category=cat,
        extra={k: v for k, v in obj.items() if k not in known},
    )


def read_pose_jsonl(path) -> list[PoseEntry]:
    entries = []
    with open(path) as fh:
        for n, raw in enumerate(fh, 1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{n}: invalid JSON ({exc.msg})") from exc
            entries.append(parse_pose_entry(obj, n))
    return entries
