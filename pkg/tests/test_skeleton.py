import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scenepose import demo
from scenepose.errors import DegeneratePose, EmptyLibrary, FormatError, UnknownClass
from scenepose.skeleton import (
    BONE_PARTS,
    BONES,
    HEAD,
    NUM_JOINTS,
    PELVIS,
    Pose3D,
    Pose3DLibrary,
    PoseClass,
    PoseClassLibrary,
    assign_pose_class,
    map_2d_to_3d,
    normalize_pose,
    parse_pose_entry,
    pose_category,
    project_rotated,
    read_pose_jsonl,
    rotate_about_axis,
    rotation_grid,
    skeleton_is_tree,
    template_pose,
)

pose_arrays = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=(17, 3)))


def test_skeleton_is_spanning_tree():
    assert skeleton_is_tree()
    assert len(BONES) == NUM_JOINTS - 1 == len(BONE_PARTS)
    assert {j for bone in BONES for j in bone} == set(range(NUM_JOINTS))


def test_pose3d_validation():
    with pytest.raises(ValueError):
        Pose3D(np.zeros((16, 3)))
    with pytest.raises(ValueError):
        Pose3D(np.full((17, 3), np.nan))
    with pytest.raises(ValueError):
        Pose3D(np.zeros((17, 3)), "lying")
    p = Pose3D(template_pose("sitting"), "sitting")
    assert np.array_equal(p.translated([1, 2, 3]).pelvis, [1, 2, 3])
    with pytest.raises(ValueError):
        p.joints[0, 0] = 1.0


@settings(max_examples=100, deadline=None)
@given(p=pose_arrays, scale=st.floats(1e-3, 1e3), shift=st.tuples(*[st.floats(-100, 100)] * 3))
def test_normalize_invariances(p, scale, shift):
    n = normalize_pose(p)
    assert n[PELVIS].tolist() == [0.0, 0.0, 0.0]
    assert np.max(np.linalg.norm(n, axis=1)) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(normalize_pose(n), n, atol=1e-9)
    assert np.allclose(normalize_pose(p * scale + np.array(shift)), n, atol=1e-9)


def test_normalize_batches_and_2d():
    rng = np.random.default_rng(0)
    batch = rng.normal(size=(4, 3, 17, 2))
    out = normalize_pose(batch)
    assert np.array_equal(out[2, 1], normalize_pose(batch[2, 1]))
    with pytest.raises(DegeneratePose):
        normalize_pose(np.ones((17, 3)))


def _tie_library():
    """Centers 2 and 9 sit exactly 2**-10 either side of a dyadic query pose."""
    p = np.round(template_pose("standing") * 0.5 * 256) / 256
    p[HEAD] = (0.0, 0.0, 1.0)
    assert np.array_equal(normalize_pose(p), p)
    base = demo.class_library()
    classes = [PoseClass(i + 1, c, cat) for i, (c, cat) in enumerate(zip(base.centers, base.categories))]
    delta = 2.0**-10
    for cid, sign in ((2, 1.0), (9, -1.0)):
        c = p.copy()
        c[12, 0] += sign * delta
        classes[cid - 1] = PoseClass(cid, c, "standing")
    return PoseClassLibrary(classes), p


def test_assign_pose_class():
    lib = demo.class_library()
    for k in range(1, 31):
        assert assign_pose_class(lib.centers[k - 1], lib) == k
        moved = Pose3D(lib.centers[k - 1] * 3 + np.array([4.0, -1.0, 2.0]))
        assert assign_pose_class(moved, lib) == k
    tie_lib, p = _tie_library()
    assert assign_pose_class(p, tie_lib) == 2


def test_pose_category_lookup():
    lib = demo.class_library()
    assert pose_category(20, lib) == "sitting"
    assert pose_category(3, lib) == "standing"
    for bad in (0, 31, 2.0):
        with pytest.raises(UnknownClass):
            pose_category(bad, lib)


def test_class_library_validation(tmp_path):
    lib = demo.class_library()
    classes = [PoseClass(i + 1, c, cat) for i, (c, cat) in enumerate(zip(lib.centers, lib.categories))]
    with pytest.raises(FormatError):
        PoseClassLibrary(classes[:-1])
    unnormalized = list(classes)
    unnormalized[0] = PoseClass(1, classes[0].center * 2, "standing")
    with pytest.raises(FormatError):
        PoseClassLibrary(unnormalized)
    path = tmp_path / "lib.json"
    path.write_text(json.dumps(lib.to_json()))
    back = PoseClassLibrary.load(path)
    assert np.array_equal(back.centers, lib.centers) and back.categories == lib.categories
    path.write_text("[{}]")
    with pytest.raises(FormatError):
        PoseClassLibrary.load(path)


def test_rotation_preserves_norms_and_broadcasts():
    rng = np.random.default_rng(1)
    p = rng.normal(size=(5, 17, 3))
    thetas = rng.uniform(-3, 3, size=5)
    r = rotate_about_axis(p, thetas)
    assert np.allclose(np.linalg.norm(r, axis=-1), np.linalg.norm(p, axis=-1))
    assert np.array_equal(r[:, :, 1], p[:, :, 1])
    assert np.allclose(rotate_about_axis(p[3], thetas[3]), r[3])
    grid = rotate_about_axis(p[:, None], rotation_grid(4)[None, :])
    assert grid.shape == (5, 4, 17, 3)
    assert np.allclose(rotate_about_axis(p[0], math.pi / 2, axis=2)[:, 0], -p[0, :, 1])


def test_map_2d_to_3d_examples():
    lib = demo.exemplar_library(20)
    thetas = rotation_grid(36)
    assert thetas[23] == pytest.approx(2 * math.pi * 5 / 36)
    q = project_rotated(lib.poses[7], thetas[23])
    m = map_2d_to_3d(q, lib, 36)
    assert (m.index, m.distance) == (7, 0.0)
    assert m.theta == pytest.approx(2 * math.pi * 5 / 36)
    assert np.allclose(m.rotated()[:, :2], q)
    scaled = map_2d_to_3d(q * 37.5 + 200, lib, 36)
    assert scaled.index == 7 and scaled.theta == m.theta and scaled.distance < 1e-12
    with pytest.raises(EmptyLibrary):
        map_2d_to_3d(q, Pose3DLibrary(np.zeros((0, 17, 3))))


def test_map_2d_to_3d_ties_and_chunks():
    lib = demo.exemplar_library(20)
    dup = Pose3DLibrary(np.stack([lib.poses[4], lib.poses[4], lib.poses[2]]))
    q = project_rotated(lib.poses[4], rotation_grid(12)[3])
    assert map_2d_to_3d(q, dup, 12).index == 0
    q = project_rotated(lib.poses[13], rotation_grid(36)[30])
    full = map_2d_to_3d(q, lib, 36)
    chunked = map_2d_to_3d(q, lib, 36, chunk=3)
    assert (full.index, full.theta, full.distance) == (chunked.index, chunked.theta, chunked.distance)
    drawn = map_2d_to_3d(q, lib, 8, rng=np.random.default_rng(5))
    assert -math.pi <= drawn.theta < math.pi


def test_parse_pose_entry(tmp_path):
    e = parse_pose_entry({"proposal_id": 5, "joints2d": np.zeros((17, 2)).tolist(), "class": 3, "note": 1})
    assert e.id == "5" and e.class_id == 3 and e.extra == {"note": 1}
    for bad in (
        {"id": "a"},
        {"id": "a", "joints2d": [[0, 0]] * 16},
        {"id": "a", "joints2d": [[0, 0]] * 17, "class": 31},
        {"id": "a", "joints2d": [[0, 0]] * 17, "category": "lying"},
        {"id": "a", "joints3d": [["x", 0, 0]] * 17},
    ):
        with pytest.raises(FormatError):
            parse_pose_entry(bad)
    path = tmp_path / "p.jsonl"
    path.write_text('{"id": "a", "joints3d": %s}\n\n{broken\n' % json.dumps(np.zeros((17, 3)).tolist()))
    with pytest.raises(FormatError, match=":3:"):
        read_pose_jsonl(path)
