"""Pinhole camera model and pixel/camera/world transforms.

Conventions:
- pixel (u, v): u grows to the right, v grows downward.
- camera frame: x right, y down, z along the optical axis (depth ``d``).
- extrinsics are stored camera-to-world: ``world = R @ cam + t``.
- ``gravity_row`` selects the row of ``R`` whose output is world height.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    BehindCamera,
    DegenerateView,
    FormatError,
    MissingDepth,
    NonPositiveDepth,
)
from .skeleton import HEAD, L_ANKLE, NUM_JOINTS, R_ANKLE, Pose3D

ORTHO_TOL = 1e-9
DEGENERATE_EPS = 1e-9


class PixelPoint(NamedTuple):
    u: float
    v: float
    d: float | None = None


@dataclass(frozen=True)
class CameraIntrinsics:
    f: float
    ox: float = 0.0
    oy: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.f) and self.f > 0):
            raise ValueError(f"focal length must be positive, got {self.f}")

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.f, 0.0, self.ox], [0.0, self.f, self.oy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    """Camera-to-world rigid transform with a designated gravity row."""

    rotation: np.ndarray
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    gravity_row: int = 2

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("extrinsics must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > ORTHO_TOL or np.linalg.det(r) < 0:
            raise ValueError("rotation is not orthonormal with det +1")
        if self.gravity_row not in (0, 1, 2):
            raise ValueError(f"gravity_row must be 0, 1 or 2, got {self.gravity_row}")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls, gravity_row: int = 2) -> "CameraExtrinsics":
        return cls(np.eye(3), np.zeros(3), gravity_row)

    @classmethod
    def from_world_to_camera(cls, rotation, translation, gravity_row: int = 2) -> "CameraExtrinsics":
        r = np.asarray(rotation, dtype=float).reshape(3, 3)
        t = np.asarray(translation, dtype=float).reshape(3)
        return cls(r.T, -r.T @ t, gravity_row)

    @classmethod
    def from_matrix(cls, m, convention: str = "camera_to_world", gravity_row: int = 2):
        m = np.asarray(m, dtype=float).reshape(3, 4)
        if convention == "camera_to_world":
            return cls(m[:, :3], m[:, 3], gravity_row)
        if convention == "world_to_camera":
            return cls.from_world_to_camera(m[:, :3], m[:, 3], gravity_row)
        raise ValueError(f"unknown extrinsics convention {convention!r}")

    @property
    def matrix(self) -> np.ndarray:
        return np.hstack([self.rotation, self.translation[:, None]])

    @property
    def gravity(self) -> np.ndarray:
        """Row of the rotation that maps camera coordinates to world height."""
        return self.rotation[self.gravity_row]


@dataclass(frozen=True, eq=False)
class Camera:
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics
    name: str = "camera"

    @classmethod
    def from_dict(cls, data: dict, name: str = "camera") -> "Camera":
        try:
            k = CameraIntrinsics(float(data["f"]), float(data["ox"]), float(data["oy"]))
            m = [float(x) for x in data["extrinsics_row_major"]]
            if len(m) != 12:
                raise FormatError("extrinsics_row_major must hold 12 numbers")
            e = CameraExtrinsics.from_matrix(
                m, data.get("convention", "camera_to_world"), int(data.get("gravity_row", 2))
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad camera description: {exc!r}") from exc
        except FormatError:
            raise
        except ValueError as exc:
            raise FormatError(f"bad camera description: {exc}") from exc
        return cls(k, e, name)

    @classmethod
    def load(cls, path) -> "Camera":
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON ({exc})") from exc
        return cls.from_dict(data, name=path.stem)

    def to_dict(self) -> dict:
        return {
            "f": self.intrinsics.f,
            "ox": self.intrinsics.ox,
            "oy": self.intrinsics.oy,
            "extrinsics_row_major": [float(x) for x in self.extrinsics.matrix.ravel()],
            "convention": "camera_to_world",
            "gravity_row": self.extrinsics.gravity_row,
        }


def pixel_to_camera(p, k: CameraIntrinsics) -> np.ndarray:
    """Back-project pixels with depth to camera coordinates.

    ``p`` is a PixelPoint or an array of shape (..., 3) holding (u, v, d).
    """
    if isinstance(p, PixelPoint) and p.d is None:
        raise MissingDepth("pixel has no depth")
    arr = np.asarray(tuple(p) if isinstance(p, PixelPoint) else p, dtype=float)
    if arr.shape[-1] != 3 or np.any(np.isnan(arr[..., 2])):
        raise MissingDepth("pixel has no depth")
    d = arr[..., 2]
    if np.any(d <= 0):
        raise NonPositiveDepth(f"depth must be positive, got {np.min(d)}")
    x = (arr[..., 0] - k.ox) * d / k.f
    y = (arr[..., 1] - k.oy) * d / k.f
    return np.stack([x, y, d], axis=-1)


def camera_to_pixel(c, k: CameraIntrinsics) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    z = c[..., 2]
    if np.any(z <= 0):
        raise BehindCamera(f"camera depth must be positive, got {np.min(z)}")
    u = k.f * c[..., 0] / z + k.ox
    v = k.f * c[..., 1] / z + k.oy
    return np.stack([u, v, z], axis=-1)


def camera_to_world(c, e: CameraExtrinsics) -> np.ndarray:
    return np.asarray(c, dtype=float) @ e.rotation.T + e.translation


def world_to_camera(w, e: CameraExtrinsics) -> np.ndarray:
    return (np.asarray(w, dtype=float) - e.translation) @ e.rotation


def world_to_pixel(w, e: CameraExtrinsics, k: CameraIntrinsics) -> np.ndarray:
    """Project world points to (u, v, d); raises BehindCamera when d <= 0."""
    return camera_to_pixel(world_to_camera(w, e), k)


def pixel_to_world(p, e: CameraExtrinsics, k: CameraIntrinsics) -> np.ndarray:
    return camera_to_world(pixel_to_camera(p, k), e)


def extreme_joints(joints2d) -> tuple[np.ndarray, np.ndarray]:
    """Return (highest, lowest) pixel joints: the head and the lower-in-image ankle."""
    j = np.asarray(joints2d, dtype=float)
    if j.shape[0] != NUM_JOINTS:
        raise ValueError(f"expected {NUM_JOINTS} joints, got {j.shape[0]}")
    ankle = L_ANKLE if j[L_ANKLE, 1] > j[R_ANKLE, 1] else R_ANKLE
    return j[HEAD, :2], j[ankle, :2]


def depth_from_extremes(top, bottom, height: float, e: CameraExtrinsics, k: CameraIntrinsics) -> float:
    """Depth at which a segment of world ``height`` spans the pixels top..bottom.

    Both endpoints are assumed to share one camera depth, which is exact for
    gravity-aligned segments seen by a camera with a horizontal optical axis.
    """
    if not height > 0:
        raise ValueError(f"height must be positive, got {height}")
    g1, g2 = e.gravity[0], e.gravity[1]
    denom = g1 * (top[0] - bottom[0]) + g2 * (top[1] - bottom[1])
    if abs(denom) < DEGENERATE_EPS:
        raise DegenerateView("gravity axis is parallel to the optical axis")
    d = height * k.f / denom
    if not d > 0:
        raise NonPositiveDepth(f"estimated depth {d} is not positive")
    return float(d)


def estimate_pose_depth(joints2d, height: float, e: CameraExtrinsics, k: CameraIntrinsics) -> float:
    top, bottom = extreme_joints(joints2d)
    return depth_from_extremes(top, bottom, height, e, k)


def lift_pose(
    joints2d,
    depth_offsets,
    d_pelvis: float,
    e: CameraExtrinsics,
    k: CameraIntrinsics,
    category: str = "standing",
) -> Pose3D:
    """Lift pixel joints to world space using per-joint depth offsets from the pelvis."""
    j = np.asarray(joints2d, dtype=float)[:, :2]
    offsets = np.asarray(depth_offsets, dtype=float).reshape(NUM_JOINTS)
    depths = d_pelvis + offsets
    bad = np.flatnonzero(~(depths > 0))
    if bad.size:
        raise NonPositiveDepth(f"joint {int(bad[0])} has non-positive depth {depths[bad[0]]}")
    uvd = np.column_stack([j, depths])
    return Pose3D(camera_to_world(pixel_to_camera(uvd, k), e), category)
