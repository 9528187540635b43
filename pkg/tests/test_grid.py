import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ssmotion.grid import (BevMap, CellSet, GridSpec, MotionField, PointCloud,
                           cell_height_extents, cells_to_meters,
                           meters_to_cells, nonempty_cells, voxelize,
                           warp_cells)

DEFAULT = GridSpec()
SMALL = GridSpec(-4, 4, -4, 4, -1, 1, 0.25, 0.25, 0.5)


def test_default_spec_shape():
    assert DEFAULT.shape == (256, 256, 12)


def test_invalid_cell_size():
    with pytest.raises(ValueError):
        GridSpec(cell_x=0.0)


def test_degenerate_axis():
    with pytest.raises(ValueError):
        GridSpec(z_min=0.0, z_max=0.1, cell_z=0.4)


def test_nonfinite_points_rejected():
    with pytest.raises(ValueError):
        PointCloud(np.array([[0.0, 0.0, np.inf]]))


def test_voxelize_single_point_default_spec():
    bev = voxelize(PointCloud(np.array([[0.0, 0.0, 0.0]])), DEFAULT)
    occupied = np.argwhere(bev.occupancy)
    assert occupied.tolist() == [[128, 128, 7]]


def test_voxelize_empty_cloud():
    bev = voxelize(PointCloud(np.empty((0, 3))), SMALL)
    assert bev.occupancy.sum() == 0


def test_voxelize_binarizes():
    one = voxelize(PointCloud(np.array([[0.1, 0.1, 0.1]])), SMALL)
    two = voxelize(PointCloud(np.array([[0.1, 0.1, 0.1], [0.11, 0.12, 0.13]])), SMALL)
    assert np.array_equal(one.occupancy, two.occupancy)


def test_voxelize_max_edge_dropped():
    bev = voxelize(PointCloud(np.array([[4.0, 0.0, 0.0]])), SMALL)
    assert bev.occupancy.sum() == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_voxelize_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-5, 5, (40, 3))
    a = voxelize(PointCloud(pts), SMALL)
    b = voxelize(PointCloud(pts[rng.permutation(40)]), SMALL)
    assert np.array_equal(a.occupancy, b.occupancy)


def test_nonempty_cells_all_zero():
    assert len(nonempty_cells(BevMap(np.zeros((4, 4, 2), np.uint8)))) == 0


def test_nonempty_cells_pillar_collapse():
    occ = np.zeros((8, 8, 3), np.uint8)
    occ[3, 5, 0] = 1
    occ[3, 5, 2] = 1
    cells = nonempty_cells(BevMap(occ))
    assert cells.coords.tolist() == [[3, 5]]


def test_nonempty_cells_matches_brute_force():
    rng = np.random.default_rng(7)
    occ = (rng.random((16, 16, 4)) < 0.1).astype(np.uint8)
    got = nonempty_cells(BevMap(occ)).coords.tolist()
    expected = [[r, c] for r in range(16) for c in range(16)
                if occ[r, c].any()]
    assert got == expected


def test_warp_zero_motion_identity():
    cells = CellSet(np.array([[1, 2], [5, 5]]))
    motion = MotionField(np.zeros((8, 8, 2)), np.ones((8, 8), bool))
    assert np.array_equal(warp_cells(cells, motion), cells.coords.astype(float))


def test_warp_direct_addition():
    cells = CellSet(np.array([[10, 10]]))
    disp = np.zeros((16, 16, 2))
    disp[10, 10] = (2.0, -1.5)
    motion = MotionField(disp, np.ones((16, 16), bool))
    assert warp_cells(cells, motion).tolist() == [[12.0, 8.5]]


def test_warp_invalid_cell_errors():
    cells = CellSet(np.array([[0, 0]]))
    motion = MotionField(np.zeros((4, 4, 2)), np.zeros((4, 4), bool))
    with pytest.raises(ValueError, match="unlabeled cell"):
        warp_cells(cells, motion)


def test_meters_to_cells_values():
    assert meters_to_cells((1.0, -0.5), DEFAULT).tolist() == [4.0, -2.0]
    assert meters_to_cells((0.0, 0.0), DEFAULT).tolist() == [0.0, 0.0]


@given(st.floats(-100, 100), st.floats(-100, 100))
def test_meters_cells_round_trip(x, y):
    v = np.array([x, y])
    assert np.array_equal(cells_to_meters(meters_to_cells(v, SMALL), SMALL), v)


def test_cell_height_extents():
    spec = SMALL  # layers at centers -0.75, -0.25, 0.25, 0.75
    occ = np.zeros((*spec.shape,), np.uint8)
    occ[2, 3, 0] = 1
    occ[2, 3, 2] = 1
    lo, hi = cell_height_extents(BevMap(occ), spec, CellSet(np.array([[2, 3]])))
    assert lo.tolist() == [-0.75]
    assert hi.tolist() == [0.25]
