import itertools

import numpy as np
import pytest

from utils.geometry import (PointCloud, Click, Box3D, SceneBounds, farthest_point_sampling, box_iou_3d,
                            points_in_box, normalize_point)
from utils.errors import DataError, ContractError


def grid():
    return np.array(list(itertools.product([-0.5, 0.0, 0.5], repeat=3)))


def test_point_cloud_validation():
    with pytest.raises(DataError):
        PointCloud(np.zeros((0, 3)), np.zeros((0, 4)))
    with pytest.raises(DataError):
        PointCloud(np.zeros((4, 2)), np.zeros((4, 4)))
    with pytest.raises(DataError):
        PointCloud(np.array([[0.0, np.nan, 0.0]]), np.zeros((1, 4)))


def test_from_xyzrgb_height_feature():
    pc = PointCloud.from_xyzrgb([[0, 0, 1.0, 1, 0, 0], [0, 0, 3.0, 0, 1, 0]])
    assert pc.features.shape == (2, 4)
    assert list(pc.features[:, 3]) == [0.0, 2.0]


def test_box_rejects_non_positive_size():
    with pytest.raises(DataError):
        Box3D((0, 0, 0), (1, 0, 1))
    with pytest.raises(DataError):
        Click((0, 0))


def test_scene_bounds():
    b = SceneBounds.from_points(grid())
    assert b.lo == (-0.5, -0.5, -0.5)
    assert b.contains((0.5, 0.5, 0.5))
    assert not b.contains((0.6, 0.0, 0.0))
    with pytest.raises(DataError):
        SceneBounds((1, 0, 0), (0, 1, 1))


def test_iou_identical_and_disjoint():
    a = Box3D((0, 0, 0), (1, 1, 1))
    assert box_iou_3d(a, a) == pytest.approx(1.0)
    assert box_iou_3d(a, Box3D((5, 5, 5), (1, 1, 1))) == 0.0
    # touching faces have zero volume overlap
    assert box_iou_3d(a, Box3D((1, 0, 0), (1, 1, 1))) == 0.0


def test_iou_half_overlap():
    a = Box3D((0, 0, 0), (1, 1, 1))
    b = Box3D((0.5, 0, 0), (1, 1, 1))
    assert box_iou_3d(a, b) == pytest.approx(1 / 3)
    assert box_iou_3d(a, b) == box_iou_3d(b, a)


def test_points_in_box_closed_boundary():
    coords = grid()
    assert len(points_in_box(coords, Box3D((0, 0, 0), (0.5, 0.5, 0.5)))) == 1
    assert len(points_in_box(coords, Box3D((0, 0, 0), (1.0, 1.0, 1.0)))) == 27


def test_fps_is_permutation_invariant():
    rng = np.random.default_rng(3)
    coords = rng.uniform(-2, 2, size=(64, 3))
    order = rng.permutation(64)
    a = coords[farthest_point_sampling(coords, 10)]
    b = coords[order][farthest_point_sampling(coords[order], 10)]
    assert sorted(map(tuple, a)) == sorted(map(tuple, b))


def test_fps_distinct_and_range():
    coords = grid()
    sel = farthest_point_sampling(coords, 27)
    assert sorted(sel) == list(range(27))
    with pytest.raises(ContractError):
        farthest_point_sampling(coords, 0)
    with pytest.raises(ContractError):
        farthest_point_sampling(coords, 28)


def test_fps_picks_corners_first():
    coords = grid()
    first = coords[farthest_point_sampling(coords, 2)]
    assert tuple(first[0]) == (-0.5, -0.5, -0.5)
    assert tuple(first[1]) == (0.5, 0.5, 0.5)


def test_normalize_point():
    b = SceneBounds((0, 0, 0), (10, 4, 2))
    p = np.array([2.5, 1.0, 1.5])
    np.testing.assert_allclose(normalize_point(p, b), [0.25, 0.25, 0.75])
    np.testing.assert_allclose(normalize_point([20, -1, 1], b), [1.0, 0.0, 0.5])
    with pytest.raises(DataError):
        normalize_point(p, SceneBounds((0, 0, 0), (1, 1, 0)))
