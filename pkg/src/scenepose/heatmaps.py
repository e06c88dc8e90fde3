"""Pose-location heat maps and depth heat-map rasterization."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .constraints import rasterize_segment
from .errors import FormatError, NoForeground
from .skeleton import BONES

HM_MAGIC = b"HM31"
HM_CHANNELS = 31
_HM_HEADER = struct.Struct("<4s2I")


@dataclass(frozen=True, eq=False)
class LocationHeatmap:
    """Per-pixel distribution over 30 pose classes plus background (last channel)."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 3 or v.shape[0] != HM_CHANNELS or 0 in v.shape:
            raise FormatError(f"heat map must have shape (31, h, w), got {v.shape}")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise FormatError("heat map values must be finite and nonnegative")
        sums = v.astype(np.float64).sum(axis=0)
        if np.max(np.abs(sums - 1.0)) > 1e-6:
            raise FormatError("heat map channels must sum to 1 at every pixel")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple:
        return self.values.shape[1:]

    def to_bytes(self) -> bytes:
        h, w = self.shape
        return _HM_HEADER.pack(HM_MAGIC, h, w) + self.values.astype("<f4").tobytes(order="C")

    @classmethod
    def from_bytes(cls, data: bytes) -> "LocationHeatmap":
        if len(data) < _HM_HEADER.size:
            raise FormatError("truncated .hm31 header")
        magic, h, w = _HM_HEADER.unpack_from(data)
        if magic != HM_MAGIC:
            raise FormatError(f"bad .hm31 magic {magic!r}")
        body = data[_HM_HEADER.size :]
        if len(body) != 4 * HM_CHANNELS * h * w:
            raise FormatError(".hm31 body size does not match its header")
        return cls(np.frombuffer(body, dtype="<f4").reshape(HM_CHANNELS, h, w))

    @classmethod
    def load(cls, path) -> "LocationHeatmap":
        return cls.from_bytes(Path(path).read_bytes())

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())


def sample_locations(hm: LocationHeatmap, n: int, tau: float = 0.5, rng: np.random.Generator | None = None):
    """Draw ``n`` (x, y, class) triples from the foreground of a location map.

    Pixels are weighted by their strongest foreground probability and only
    pixels where that probability exceeds ``tau`` are eligible.
    """
    if n < 0 or not 0 <= tau < 1:
        raise ValueError("need n >= 0 and tau in [0, 1)")
    rng = np.random.default_rng() if rng is None else rng
    fg = hm.values[: HM_CHANNELS - 1]
    peak = fg.max(axis=0).astype(np.float64)
    cls = fg.argmax(axis=0) + 1
    ys, xs = np.nonzero(peak > tau)
    if len(ys) == 0:
        raise NoForeground(f"no pixel has foreground probability above {tau}")
    w = peak[ys, xs]
    picks = rng.choice(len(ys), size=n, p=w / w.sum())
    return [(int(xs[i]), int(ys[i]), int(cls[ys[i], xs[i]])) for i in picks]


def render_depth_heatmap(joints2d, depths, shape) -> np.ndarray:
    """Rasterize a skeleton into an (h, w) map of interpolated depths, -1 elsewhere.

    Joint pixels are rounded to the nearest integer pixel; where bones overlap
    the smallest depth wins.
    """
    h, w = shape
    if h <= 0 or w <= 0:
        raise ValueError("image dims must be positive")
    j = np.asarray(joints2d, dtype=float)[:, :2]
    d = np.asarray(depths, dtype=float)
    pix = (np.sign(j) * np.floor(np.abs(j) + 0.5)).astype(np.int64)
    out = np.full((h, w), np.inf)
    for a, b in BONES:
        pts = rasterize_segment(pix[a], pix[b])
        n = len(pts) - 1
        frac = np.arange(n + 1) / n if n else np.zeros(1)
        vals = (1.0 - frac) * d[a] + frac * d[b]
        u, v = pts[:, 0], pts[:, 1]
        ok = (u >= 0) & (u < w) & (v >= 0) & (v < h)
        np.minimum.at(out, (v[ok], u[ok]), vals[ok])
    out[np.isinf(out)] = -1.0
    return out
