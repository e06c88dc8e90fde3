"""Random scenes, poses and file fixtures shared across tests."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from scenepose import demo
from scenepose.skeleton import PELVIS, Pose3D, template_pose
from scenepose.voxels import SceneVoxelGrid


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def yaw(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_scene(rng, max_side=64, voxel_size=0.04) -> SceneVoxelGrid:
    """Floor plus a few random furniture boxes (affordable or not)."""
    dims = tuple(int(x) for x in rng.integers(32, max_side + 1, size=3))
    s = SceneVoxelGrid.empty(dims, demo.LABELS, voxel_size=voxel_size, name="random")
    s = s.with_box((0, 0, 0), (dims[0], dims[1], 2), demo.FLOOR)
    for _ in range(rng.integers(1, 5)):
        lo = np.array([rng.integers(0, dims[0] - 4), rng.integers(0, dims[1] - 4), 2])
        size = rng.integers([4, 4, 3], [24, 24, 16])
        hi = np.minimum(lo + size, dims)
        s = s.with_box(lo, hi, int(rng.choice([demo.BED, demo.CHAIR, demo.WALL])))
    return s


def random_pose(rng, scene: SceneVoxelGrid) -> Pose3D:
    """Template pose with a random yaw, jittered limbs and a random pelvis voxel."""
    cat = "standing" if rng.random() < 0.5 else "sitting"
    p = template_pose(cat)
    p[1:] += rng.normal(0, 0.03, size=(16, 3))
    scale = rng.uniform(0.7, 1.0)
    p = (p * scale) @ yaw(rng.uniform(0, 2 * np.pi)).T
    dims = np.array(scene.dims)
    target = rng.integers([4, 4, 6], np.maximum(dims - [4, 4, 8], [5, 5, 7]))
    return Pose3D(p - p[PELVIS] + scene.voxel_to_world(target), cat)


def write_jsonl(path: Path, rows) -> Path:
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    return path


def read_jsonl(path: Path) -> list[dict]:
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


def write_inputs(tmp: Path, scene, camera, rows, config: str | None = None) -> dict:
    """Write a scene, camera, class library and proposals; return CLI paths."""
    tmp.mkdir(parents=True, exist_ok=True)
    scene.save(tmp / "scene.svx", tmp / "labels.json")
    (tmp / "camera.json").write_text(json.dumps(camera.to_dict()))
    (tmp / "classes.json").write_text(json.dumps(demo.class_library().to_json()))
    write_jsonl(tmp / "poses.jsonl", rows)
    paths = {
        "scene": str(tmp / "scene.svx"),
        "labels": str(tmp / "labels.json"),
        "camera": str(tmp / "camera.json"),
        "classes": str(tmp / "classes.json"),
        "poses": str(tmp / "poses.jsonl"),
    }
    if config is not None:
        (tmp / "config.toml").write_text(config)
        paths["config"] = str(tmp / "config.toml")
    return paths
