"""Keypoint selection and its file format.

Surface membership is checked with two independent oracles: an axis-aligned
one for boxes (some coordinate pinned to a face plane, all inside the box)
and a barycentric one for a lone triangle.
"""

import numpy as np
import pytest

from satpose import (
    SPEED_KEYPOINT_COUNT,
    InsufficientGeometry,
    KeypointSet,
    MeshModel,
    MissingConfig,
    load_keypoints,
    make_box_mesh,
    sample_surface,
    save_keypoints,
    select_keypoints,
    speed_keypoints,
    triangle_areas,
)


def on_box_surface(points, size):
    half = np.asarray(size) / 2.0
    inside = (np.abs(points) <= half + 1e-12).all(axis=1)
    pinned = (np.abs(np.abs(points) - half) < 1e-12).any(axis=1)
    return inside & pinned


def min_pairwise_distance(points):
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    np.fill_diagonal(d, np.inf)
    return d.min()


def test_box_areas_sum_to_surface_area(unit_cube):
    assert triangle_areas(unit_cube).sum() == pytest.approx(6.0)


def test_samples_lie_on_the_box(unit_cube, rng):
    pts = sample_surface(unit_cube, 5000, rng)
    assert on_box_surface(pts, [1.0, 1.0, 1.0]).all()


def test_sampling_covers_all_faces(unit_cube, rng):
    # uniform by area: each cube face should get roughly a sixth
    pts = sample_surface(unit_cube, 6000, rng)
    half = 0.5
    for axis in range(3):
        for sign in (-1.0, 1.0):
            hits = np.abs(pts[:, axis] - sign * half) < 1e-12
            assert 700 < hits.sum() < 1300

def test_samples_on_single_triangle_are_barycentric():
    mesh = MeshModel(np.array([[0.0, 0, 0], [2.0, 0, 0], [0.0, 3.0, 0]]), np.array([[0, 1, 2]]))
    pts = sample_surface(mesh, 500, np.random.default_rng(7))
    assert (np.abs(pts[:, 2]) < 1e-12).all()
    u = pts[:, 0] / 2.0
    v = pts[:, 1] / 3.0
    assert (u >= -1e-12).all() and (v >= -1e-12).all() and (u + v <= 1 + 1e-12).all()


def test_zero_area_mesh_rejected():
    flat = MeshModel(np.array([[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0]]), np.array([[0, 1, 2]]))
    with pytest.raises(InsufficientGeometry):
        sample_surface(flat, 10, np.random.default_rng(0))


def test_selection_is_deterministic(barrel_mesh):
    a = select_keypoints(barrel_mesh, 12, seed=3)
    b = select_keypoints(barrel_mesh, 12, seed=3)
    np.testing.assert_array_equal(a.points, b.points)
    c = select_keypoints(barrel_mesh, 12, seed=4)
    assert not np.array_equal(a.points, c.points)


def test_selection_stays_on_surface(barrel_mesh):
    kps = select_keypoints(barrel_mesh, 20, seed=1)
    assert kps.n == 20
    assert on_box_surface(kps.points, [3.0, 3.0, 6.3]).all()


def test_selection_spreads_better_than_random(unit_cube):
    # thinning should beat plain area-uniform draws on worst-pair distance
    rng = np.random.default_rng(99)
    baseline = np.array(
        [min_pairwise_distance(sample_surface(unit_cube, 8, rng)) for _ in range(300)]
    )
    for seed in range(10):
        picked = min_pairwise_distance(select_keypoints(unit_cube, 8, seed=seed).points)
        assert picked > np.percentile(baseline, 75)


def test_single_triangle_selection():
    mesh = MeshModel(np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1.0, 0]]), np.array([[0, 1, 2]]))
    kps = select_keypoints(mesh, 3, seed=0)
    assert kps.n == 3
    assert min_pairwise_distance(kps.points) > 0.0


def test_selection_argument_validation(unit_cube):
    with pytest.raises(ValueError):
        select_keypoints(unit_cube, 0)
    with pytest.raises(ValueError):
        select_keypoints(unit_cube, 4, oversample_factor=0.5)


def test_keypoint_set_validation():
    with pytest.raises(ValueError):
        KeypointSet(np.zeros((0, 3)))
    with pytest.raises(ValueError):
        KeypointSet(np.zeros((4, 2)))
    with pytest.raises(ValueError):
        KeypointSet(np.array([[1.0, 2, 3], [1.0, 2, 3]]))  # duplicate


def test_save_load_round_trip(tmp_path, barrel_kps):
    path = tmp_path / "kps.txt"
    save_keypoints(barrel_kps, path)
    loaded = load_keypoints(path)
    np.testing.assert_array_equal(loaded.points, barrel_kps.points)


def test_load_skips_comments_and_blank_lines(tmp_path):
    path = tmp_path / "kps.txt"
    path.write_text("# body frame, meters\n\n1 2 3\n4 5 6\n")
    np.testing.assert_array_equal(load_keypoints(path).points, [[1, 2, 3], [4, 5, 6]])


def test_load_failures(tmp_path):
    with pytest.raises(MissingConfig):
        load_keypoints(tmp_path / "absent.txt")
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2\n")
    with pytest.raises(MissingConfig):
        load_keypoints(bad)
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing\n")
    with pytest.raises(MissingConfig):
        load_keypoints(empty)
    dup = tmp_path / "dup.txt"
    dup.write_text("1 2 3\n1 2 3\n")
    with pytest.raises(MissingConfig):
        load_keypoints(dup)


def test_fixed_set_requires_exactly_eleven(tmp_path):
    path = tmp_path / "model.txt"
    save_keypoints(KeypointSet(np.arange(30.0).reshape(10, 3)), path)
    with pytest.raises(MissingConfig):
        speed_keypoints(path)
    save_keypoints(KeypointSet(np.arange(33.0).reshape(11, 3)), path)
    assert speed_keypoints(path).n == SPEED_KEYPOINT_COUNT


def test_box_mesh_structure():
    mesh = make_box_mesh([2.0, 4.0, 6.0])
    assert len(mesh.vertices) == 8
    assert len(mesh.triangles) == 12
    assert triangle_areas(mesh).sum() == pytest.approx(2 * (2 * 4 + 2 * 6 + 4 * 6))
