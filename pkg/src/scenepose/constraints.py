"""Pose voxelization, free-space and support constraints, and local adjustment."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import ndimage

from . import _kernels
from .errors import DegeneratePose
from .skeleton import BONE_PARTS, BONES, CONTACT_PARTS, L_ANKLE, PART_BITS, PELVIS, R_ANKLE, Pose3D
from .voxels import SceneVoxelGrid, build_free_space_grid, detect_support_surface, gaussian_kernel


@dataclass(frozen=True)
class ConstraintConfig:
    t_f: int = 5
    t_s: float = 100.0
    support_proximity: int = 8
    search_radius: float = 0.3
    bone_radius: int = 2

    def __post_init__(self):
        if self.t_f < 0:
            raise ValueError("t_f must be >= 0")
        if not self.t_s > 0:
            raise ValueError("t_s must be > 0")
        if self.search_radius < 0:
            raise ValueError("search_radius must be >= 0")
        if self.support_proximity < 0 or self.bone_radius < 0:
            raise ValueError("support_proximity and bone_radius must be >= 0")

    def window_voxels(self, voxel_size: float) -> int:
        return int(math.floor(self.search_radius / voxel_size + 1e-9))

    @classmethod
    def from_mapping(cls, data: dict) -> "ConstraintConfig":
        """Build from config-file keys (``search_radius_m`` maps to ``search_radius``)."""
        data = dict(data)
        if "search_radius_m" in data:
            data["search_radius"] = data.pop("search_radius_m")
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown constraint keys: {sorted(unknown)}")
        casts = {"t_f": int, "support_proximity": int, "bone_radius": int, "t_s": float, "search_radius": float}
        return cls(**{k: casts[k](v) for k, v in data.items()})

    def override(self, **kwargs) -> "ConstraintConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


class SceneConstraints:
    """Scene grids shared by every constraint query: V_f and the support fields."""

    def __init__(self, scene: SceneVoxelGrid, kernel: np.ndarray | None = None, eps: float = 0.05):
        self.scene = scene
        self.free_space = build_free_space_grid(scene)
        self.support = detect_support_surface(scene, gaussian_kernel() if kernel is None else kernel, eps)
        floor = scene.floor_mask()
        self.floor_support = self.support if floor is None else np.where(floor, self.support, 0.0)
        for arr in (self.free_space, self.support, self.floor_support):
            arr.setflags(write=False)
        self.support_points = np.argwhere(self.support != 0)
        self.floor_points = np.argwhere(self.floor_support != 0)

    def surface_points(self, support: np.ndarray) -> np.ndarray:
        """Nonzero voxels of a support field in lexicographic order (cached for this scene's fields)."""
        if support is self.support:
            return self.support_points
        if support is self.floor_support:
            return self.floor_points
        return np.argwhere(support != 0)

    def field_for(self, category: str) -> np.ndarray:
        """Standing poses are supported by the floor only; sitting by any surface."""
        return self.floor_support if category == "standing" else self.support


# --------------------------------------------------------------------------
# voxelization


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def rasterize_segment(i0, i1) -> np.ndarray:
    """Integer voxels on the segment i0..i1 (inclusive), stepping the major axis."""
    i0 = np.asarray(i0, dtype=np.int64)
    rel = np.asarray(i1, dtype=np.int64) - i0
    n = int(np.max(np.abs(rel)))
    if n == 0:
        return i0[None].copy()
    steps = np.arange(n + 1)[:, None]
    return i0 + _round_half_away(rel[None] * steps / n).astype(np.int64)


@dataclass(frozen=True, eq=False)
class PoseVoxelization:
    """Voxels of a pose as offsets from the pelvis voxel (``anchor``).

    ``offsets`` are sorted lexicographically; ``tags`` hold part bitmasks.
    """

    offsets: np.ndarray
    tags: np.ndarray
    contact: np.ndarray
    anchor: np.ndarray
    category: str

    @property
    def contact_offsets(self) -> np.ndarray:
        return self.offsets[self.contact]

    @property
    def body_offsets(self) -> np.ndarray:
        """Offsets checked against free space (contact parts masked out)."""
        return self.offsets[~self.contact]


def voxelize_pose(pose: Pose3D, scene: SceneVoxelGrid, cfg: ConstraintConfig = ConstraintConfig()) -> PoseVoxelization:
    idx = scene.world_to_voxel(pose.joints)
    anchor = idx[PELVIS]
    lines = []
    for (a, b), part in zip(BONES, BONE_PARTS):
        lines.append((rasterize_segment(idx[a], idx[b]), PART_BITS[part]))
    lines.append((idx[[R_ANKLE, L_ANKLE]], PART_BITS["foot"]))
    pts = np.concatenate([p for p, _ in lines])
    r = cfg.bone_radius
    lo = pts.min(axis=0) - r
    shape = tuple(pts.max(axis=0) - lo + r + 1)
    if np.prod(shape, dtype=np.int64) > 64_000_000:
        raise DegeneratePose(f"pose spans {shape} voxels")
    bits = np.concatenate([np.full(len(p), b, dtype=np.uint8) for p, b in lines])
    vol = _kernels.stamp_cubes(np.zeros(shape, dtype=np.uint8), pts - lo, bits, r)
    cells = np.argwhere(vol)
    tags = vol[cells[:, 0], cells[:, 1], cells[:, 2]]
    contact_bits = 0
    for part in CONTACT_PARTS[pose.category]:
        contact_bits |= PART_BITS[part]
    return PoseVoxelization(
        offsets=cells + lo - anchor,
        tags=tags,
        contact=(tags & contact_bits) != 0,
        anchor=anchor,
        category=pose.category,
    )


# --------------------------------------------------------------------------
# responses


def _gather(grid: np.ndarray, points: np.ndarray, fill) -> np.ndarray:
    dims = np.array(grid.shape)
    inside = np.all((points >= 0) & (points < dims), axis=1)
    out = np.full(len(points), fill, dtype=grid.dtype)
    p = points[inside]
    out[inside] = grid[p[:, 0], p[:, 1], p[:, 2]]
    return out


def free_space_response(vox: PoseVoxelization, free_space: np.ndarray, anchor=None) -> int:
    """R_f: occupied non-contact voxels; voxels outside the grid count as occupied."""
    anchor = vox.anchor if anchor is None else np.asarray(anchor)
    return int(np.sum(_gather(free_space, vox.body_offsets + anchor, 1), dtype=np.int64))


def _sequential_sum(values: np.ndarray) -> float:
    return float(np.cumsum(values)[-1]) if len(values) else 0.0


def support_response(vox: PoseVoxelization, support: np.ndarray, anchor=None) -> float:
    """R_s: support field summed over contact voxels (outside the grid counts 0).

    Terms are added left to right in offset order.
    """
    anchor = vox.anchor if anchor is None else np.asarray(anchor)
    return _sequential_sum(_gather(support, vox.contact_offsets + anchor, 0.0))


def _crop(grid: np.ndarray, lo, hi, fill) -> np.ndarray:
    lo, hi = np.asarray(lo), np.asarray(hi)
    dims = np.array(grid.shape)
    out = np.full(tuple(hi - lo), fill, dtype=grid.dtype)
    clo, chi = np.clip(lo, 0, dims), np.clip(hi, 0, dims)
    if np.all(chi > clo):
        s, d = clo - lo, chi - lo
        out[s[0] : d[0], s[1] : d[1], s[2] : d[2]] = grid[clo[0] : chi[0], clo[1] : chi[1], clo[2] : chi[2]]
    return out


@functools.lru_cache(maxsize=8)
def _window_cells(radius: int) -> tuple[np.ndarray, np.ndarray]:
    """Window translations in lexicographic order, and their order by squared length."""
    n = 2 * radius + 1
    t = np.argwhere(np.ones((n, n, n), dtype=bool)) - radius
    order = np.argsort(np.sum(t * t, axis=1), kind="stable")
    t.setflags(write=False)
    order.setflags(write=False)
    return t, order


@dataclass(frozen=True, eq=False)
class WindowScan:
    """Support responses for all translations ``-radius..radius`` of a pose."""

    vox: PoseVoxelization
    radius: int
    r_s: np.ndarray
    occ: np.ndarray
    body: np.ndarray

    def translations(self) -> np.ndarray:
        return _window_cells(self.radius)[0]

    def ranked(self, top: int | None = None) -> np.ndarray:
        """Translations ordered by R_s desc, then |t|, then lexicographic t.

        With ``top``, only a leading part of that order is returned: every
        translation whose R_s reaches the ``top``-th largest value.
        """
        t, by_length = _window_cells(self.radius)
        rs = self.r_s.ravel()
        if top is not None and top < len(rs):
            cut = np.partition(rs, len(rs) - top)[len(rs) - top]
            by_length = by_length[rs[by_length] >= cut]
        order = by_length[np.argsort(-rs[by_length], kind="stable")]
        return t[order]

    def first_feasible(self, ranked: np.ndarray, t_f: int):
        """First translation in ``ranked`` with R_f <= t_f, as (translation, R_f) or None."""
        lo = self.radius  # translation t samples occ at t + radius + body offset
        m, count = _kernels.first_feasible(self.occ, self.body, np.ascontiguousarray(ranked + lo), t_f)
        if m < 0:
            return None
        return ranked[m], int(count)

    def r_s_at(self, t) -> float:
        a, b, c = np.asarray(t) + self.radius
        return float(self.r_s[a, b, c])


def scan_window(vox: PoseVoxelization, sc: SceneConstraints, radius: int, support: np.ndarray | None = None) -> WindowScan:
    support = sc.field_for(vox.category) if support is None else support
    omin = vox.offsets.min(axis=0)
    omax = vox.offsets.max(axis=0)
    lo = vox.anchor - radius + omin
    hi = vox.anchor + radius + omax + 1
    fcrop = _crop(support, lo, hi, 0.0)
    occ = _crop(sc.free_space, lo, hi, np.uint8(1))
    n = 2 * radius + 1
    contact = np.ascontiguousarray(vox.contact_offsets - omin)
    pts = sc.surface_points(support)
    inside = np.all((pts >= lo) & (pts < hi), axis=1)
    surface = np.ascontiguousarray(pts[inside] - lo)
    r_s = _kernels.support_window(fcrop, surface, contact, n)
    body = np.ascontiguousarray(vox.body_offsets - omin)
    return WindowScan(vox, radius, r_s, occ, body)


# --------------------------------------------------------------------------
# adjustment and checking


@dataclass(frozen=True, eq=False)
class AdjustResult:
    status: str  # "accepted" | "discarded"
    pose: Pose3D
    translation: np.ndarray
    r_f: int
    r_s: float
    reason: str | None = None

    @property
    def accepted(self) -> bool:
        return self.status == "accepted"


def adjust_pose(pose: Pose3D, sc: SceneConstraints, cfg: ConstraintConfig = ConstraintConfig()) -> AdjustResult:
    """Translate a pose within the local window to the feasible spot of maximal support.

    Feasible means R_f <= t_f. The best translation is accepted when its R_s
    reaches t_s; otherwise the pose is discarded with the best responses found.
    """
    vox = voxelize_pose(pose, sc.scene, cfg)
    scan = scan_window(vox, sc, cfg.window_voxels(sc.scene.voxel_size))
    head = scan.ranked(top=256)
    found = scan.first_feasible(head, cfg.t_f)
    if found is None and len(head) < scan.r_s.size:
        found = scan.first_feasible(scan.ranked()[len(head) :], cfg.t_f)
    if found is None:
        support = sc.field_for(pose.category)
        return AdjustResult(
            "discarded", pose, np.zeros(3, dtype=np.int64),
            free_space_response(vox, sc.free_space), support_response(vox, support), "no_free_space",
        )
    t, r_f = found
    r_s = scan.r_s_at(t)
    if r_s < cfg.t_s:
        return AdjustResult("discarded", pose, np.zeros(3, dtype=np.int64), r_f, r_s, "no_support")
    moved = pose if not t.any() else pose.translated(t * sc.scene.voxel_size)
    return AdjustResult("accepted", moved, t, r_f, r_s)


@dataclass(frozen=True)
class CheckResult:
    free_ok: bool
    support_ok: bool
    r_f: int
    r_s: float
    proximity: int | None = None

    @property
    def ok(self) -> bool:
        return self.free_ok and self.support_ok


def floor_proximity(vox: PoseVoxelization, surface: np.ndarray, limit: int) -> int | None:
    """Smallest Chebyshev distance (<= limit) from a contact voxel to a surface voxel."""
    feet = vox.contact_offsets + vox.anchor
    if len(feet) == 0:
        return None
    lo = feet.min(axis=0) - limit
    hi = feet.max(axis=0) + limit + 1
    crop = _crop(surface, lo, hi, 0.0) > 0
    if not crop.any():
        return None
    dist = ndimage.distance_transform_cdt(~crop, metric="chessboard")
    q = feet - lo
    best = int(dist[q[:, 0], q[:, 1], q[:, 2]].min())
    return best if best <= limit else None


def check_pose(pose: Pose3D, sc: SceneConstraints, cfg: ConstraintConfig = ConstraintConfig()) -> CheckResult:
    """Score-time validity test for one pose at its current location."""
    vox = voxelize_pose(pose, sc.scene, cfg)
    r_f = free_space_response(vox, sc.free_space)
    if pose.category == "standing":
        r_s = support_response(vox, sc.floor_support)
        prox = floor_proximity(vox, sc.floor_support, cfg.support_proximity)
        support_ok = prox is not None
    else:
        r_s = support_response(vox, sc.support)
        scan = scan_window(vox, sc, cfg.support_proximity, sc.support)
        best = scan.r_s.max()
        support_ok = bool(best >= cfg.t_s)
        prox = None
        if support_ok:
            hits = np.argwhere(scan.r_s >= cfg.t_s) - cfg.support_proximity
            prox = int(np.abs(hits).max(axis=1).min())
    return CheckResult(r_f <= cfg.t_f, support_ok, r_f, r_s, prox)
