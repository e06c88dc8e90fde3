"""Labeled scene voxel grids, 3D correlation and support-surface detection."""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, RegionOutOfBounds

SVX_MAGIC = b"SVX1"
_SVX_HEADER = struct.Struct("<4s3I4dB")

DEFAULT_VOXEL_SIZE = 0.02
DEFAULT_KERNEL_SIDE = 5
DEFAULT_SIGMA = 1.0
DEFAULT_EPS = 0.05


@dataclass(frozen=True)
class LabelInfo:
    name: str
    occupies_space: bool
    affordable: bool


@dataclass(frozen=True, eq=False)
class SceneVoxelGrid:
    """Labeled occupancy grid. ``labels[i, j, k]`` is indexed (x, y, z); 0 is empty."""

    labels: np.ndarray
    label_table: dict = field(default_factory=dict)
    voxel_size: float = DEFAULT_VOXEL_SIZE
    origin: tuple = (0.0, 0.0, 0.0)
    up_axis: int = 2
    name: str = "scene"

    def __post_init__(self):
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels.ndim != 3:
            raise ValueError("labels must be a 3D array")
        if not self.voxel_size > 0:
            raise ValueError("voxel_size must be positive")
        if self.up_axis not in (0, 1, 2):
            raise ValueError("up_axis must be 0, 1 or 2")
        table = {int(k): v for k, v in self.label_table.items()}
        if 0 in table and table[0].occupies_space:
            raise FormatError("label 0 is reserved for empty space")
        missing = sorted(set(np.unique(labels).tolist()) - set(table) - {0})
        if missing:
            raise FormatError(f"labels {missing} are not in the label table")
        labels.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "label_table", table)
        object.__setattr__(self, "origin", tuple(float(x) for x in self.origin))

    @property
    def dims(self) -> tuple:
        return self.labels.shape

    def _lut(self, attr: str) -> np.ndarray:
        lut = np.zeros(256, dtype=np.uint8)
        for label, info in self.label_table.items():
            if label != 0:
                lut[label] = bool(getattr(info, attr))
        return lut

    def occupied(self) -> np.ndarray:
        return self._lut("occupies_space")[self.labels]

    def affordable(self) -> np.ndarray:
        return self._lut("affordable")[self.labels]

    def floor_mask(self) -> np.ndarray | None:
        """Voxels labeled ``floor``, or None when the table has no floor label."""
        floors = [lab for lab, info in self.label_table.items() if info.name.lower() == "floor"]
        if not floors:
            return None
        return np.isin(self.labels, floors)

    def world_to_voxel(self, w) -> np.ndarray:
        w = np.asarray(w, dtype=float)
        return np.floor((w - np.asarray(self.origin)) / self.voxel_size).astype(np.int64)

    def voxel_to_world(self, i) -> np.ndarray:
        """World coordinates of voxel centers."""
        return np.asarray(self.origin) + (np.asarray(i, dtype=float) + 0.5) * self.voxel_size

    # -- construction helpers -------------------------------------------------

    @classmethod
    def empty(cls, dims, label_table=None, **kwargs) -> "SceneVoxelGrid":
        return cls(np.zeros(dims, dtype=np.uint8), label_table or {}, **kwargs)

    def with_box(self, lo, hi, label: int) -> "SceneVoxelGrid":
        """Copy of the grid with the half-open index box [lo, hi) set to ``label``."""
        labels = self.labels.copy()
        labels[lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]] = label
        return SceneVoxelGrid(labels, self.label_table, self.voxel_size, self.origin, self.up_axis, self.name)

    # -- I/O -------------------------------------------------------------------

    def to_svx_bytes(self) -> bytes:
        nx, ny, nz = self.dims
        header = _SVX_HEADER.pack(SVX_MAGIC, nx, ny, nz, self.voxel_size, *self.origin, self.up_axis)
        return header + self.labels.tobytes(order="F")

    def label_table_json(self) -> list[dict]:
        return [
            {"label": lab, "name": info.name, "occupies_space": info.occupies_space, "affordable": info.affordable}
            for lab, info in sorted(self.label_table.items())
        ]

    def save(self, svx_path, labels_path) -> None:
        Path(svx_path).write_bytes(self.to_svx_bytes())
        Path(labels_path).write_text(json.dumps(self.label_table_json(), indent=1))

    @classmethod
    def from_svx_bytes(cls, data: bytes, label_table: dict, name: str = "scene") -> "SceneVoxelGrid":
        if len(data) < _SVX_HEADER.size:
            raise FormatError("truncated .svx header")
        magic, nx, ny, nz, vs, ox, oy, oz, up = _SVX_HEADER.unpack_from(data)
        if magic != SVX_MAGIC:
            raise FormatError(f"bad .svx magic {magic!r}")
        n = nx * ny * nz
        body = data[_SVX_HEADER.size :]
        if len(body) != n:
            raise FormatError(f".svx body holds {len(body)} bytes, expected {n}")
        labels = np.frombuffer(body, dtype=np.uint8).reshape((nx, ny, nz), order="F")
        try:
            return cls(labels, label_table, vs, (ox, oy, oz), up, name)
        except ValueError as exc:
            raise FormatError(str(exc)) from exc

    @classmethod
    def load(cls, svx_path, labels_path) -> "SceneVoxelGrid":
        table = load_label_table(labels_path)
        return cls.from_svx_bytes(Path(svx_path).read_bytes(), table, name=Path(svx_path).stem)


def load_label_table(path) -> dict:
    try:
        rows = json.loads(Path(path).read_text())
        table = {}
        for row in rows:
            label = int(row["label"])
            if not 0 <= label <= 255:
                raise ValueError(f"label {label} out of u8 range")
            table[label] = LabelInfo(str(row["name"]), bool(row["occupies_space"]), bool(row["affordable"]))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: bad label table ({exc})") from exc
    return table


def build_free_space_grid(scene: SceneVoxelGrid) -> np.ndarray:
    """V_f: 1 where the voxel is occupied, 0 in free space."""
    return scene.occupied()


def build_support_source_grid(scene: SceneVoxelGrid) -> np.ndarray:
    """V_s: 0 on affordable objects, 1 everywhere else (empty voxels included)."""
    return (1 - scene.affordable()).astype(np.uint8)


def gaussian_kernel(side: int = DEFAULT_KERNEL_SIDE, sigma: float = DEFAULT_SIGMA) -> np.ndarray:
    if side < 1 or side % 2 == 0:
        raise ValueError("kernel side must be odd")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    o = np.arange(side) - side // 2
    w = np.exp(-(o * o) / (2.0 * sigma * sigma))
    k = w[:, None, None] * w[None, :, None] * w[None, None, :]
    return k / k.sum()


def correlate3d(field, kernel, region=None) -> np.ndarray:
    """3D correlation ``out(i) = sum_o kernel(o) * field(i + o)`` with edge replication.

    ``region`` is an optional half-open box ``(lo, hi)`` of output voxels.
    Terms are accumulated in lexicographic kernel-offset order, so the result
    is reproducible bit for bit.
    """
    field = np.asarray(field)
    kernel = np.asarray(kernel)
    if kernel.ndim != 3 or any(s % 2 == 0 for s in kernel.shape):
        raise ValueError("kernel must be 3D with odd side lengths")
    dims = np.array(field.shape)
    if region is None:
        lo, hi = np.zeros(3, dtype=int), dims.copy()
    else:
        lo, hi = np.asarray(region[0], dtype=int), np.asarray(region[1], dtype=int)
        if np.any(lo < 0) or np.any(hi > dims) or np.any(lo > hi):
            raise RegionOutOfBounds(f"region {lo.tolist()}..{hi.tolist()} outside grid {dims.tolist()}")
    out_shape = tuple(hi - lo)
    out = np.zeros(out_shape, dtype=np.result_type(field.dtype, kernel.dtype))
    if 0 in out_shape:
        return out
    r = np.array(kernel.shape) // 2
    src_lo, src_hi = lo - r, hi + r
    clo, chi = np.maximum(src_lo, 0), np.minimum(src_hi, dims)
    crop = field[clo[0] : chi[0], clo[1] : chi[1], clo[2] : chi[2]]
    padded = np.pad(crop, list(zip(clo - src_lo, src_hi - chi)), mode="edge")
    nx, ny, nz = out_shape
    for (a, b, c), w in np.ndenumerate(kernel):
        out += w * padded[a : a + nx, b : b + ny, c : c + nz]
    return out


def free_above(scene: SceneVoxelGrid) -> np.ndarray:
    """True where the next voxel up is free; the layer beyond the grid counts as solid."""
    occ = scene.occupied().astype(bool)
    above = np.ones_like(occ)
    src = [slice(None)] * 3
    dst = [slice(None)] * 3
    src[scene.up_axis] = slice(1, None)
    dst[scene.up_axis] = slice(None, -1)
    above[tuple(dst)] = occ[tuple(src)]
    return ~above


def detect_support_surface(
    scene: SceneVoxelGrid,
    kernel: np.ndarray | None = None,
    eps: float = DEFAULT_EPS,
) -> np.ndarray:
    """Support field: smoothed V_s kept on affordable boundary voxels facing up."""
    if not 0 < eps < 0.5:
        raise ValueError("eps must lie in (0, 0.5)")
    if kernel is None:
        kernel = gaussian_kernel()
    smoothed = correlate3d(build_support_source_grid(scene).astype(np.float64), kernel)
    keep = (smoothed > eps) & (smoothed < 1 - eps) & scene.affordable().astype(bool) & free_above(scene)
    return np.where(keep, smoothed, 0.0)
