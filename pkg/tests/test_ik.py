import itertools

import numpy as np
import pytest
from scipy import ndimage

from cable_bbo.ik import IKQuery, count_clusters, hull_area, hull_volume, ik_grid_search, joint_grid, scatter_to_csv
from cable_bbo.sim import ArmConfig, forward_kinematics, forward_kinematics_batch


def test_query_validation():
    with pytest.raises(ValueError):
        IKQuery((0, 0), delta_mm=0)
    with pytest.raises(ValueError):
        joint_grid(ArmConfig(), 7.0)


def test_self_consistency_and_exhaustive():
    arm = ArmConfig()
    j = np.array([30.0, -45.0, 60.0])
    q = IKQuery(tuple(forward_kinematics(arm, j)), delta_mm=3.0, grid_step_deg=3.0)
    sols = ik_grid_search(q, arm)
    assert any(np.array_equal(s, j) for s in sols)
    p = forward_kinematics_batch(arm, sols)
    assert np.all(np.abs(p - q.target_point_mm) <= 3.0)
    # Brute force over the whole grid with a different loop order.
    grid = np.stack(np.meshgrid(*joint_grid(arm, 3.0), indexing="ij"), axis=-1).reshape(-1, 3)
    ok = np.all(np.abs(forward_kinematics_batch(arm, grid) - q.target_point_mm) <= 3.0, axis=1)
    ref = grid[ok]
    np.testing.assert_array_equal(sols, ref[np.lexsort(ref.T[::-1])])


def test_unreachable_target_is_empty():
    sols = ik_grid_search(IKQuery((220 + 3 * np.sqrt(2) + 1, 0), grid_step_deg=2.0))
    assert sols.shape == (0, 3)


def test_mid_reach_target_has_several_families():
    # Straight ahead of the base both elbow families fit inside the joint limits.
    sols = ik_grid_search(IKQuery((150.0, 0.0), delta_mm=3.0, grid_step_deg=1.0))
    occ = np.zeros((181, 181), dtype=bool)
    occ[(sols[:, 0] + 90).astype(int), (sols[:, 1] + 90).astype(int)] = True
    _, n_comp = ndimage.label(occ, structure=np.ones((3, 3)))
    assert n_comp >= 2


def test_hull_volume_and_clusters():
    cube = np.array([[x, y, z] for x in (0, 2) for y in (0, 2) for z in (0, 2)], dtype=float)
    assert hull_volume(cube) == pytest.approx(8.0)
    assert hull_volume(np.column_stack([cube[:, :2], np.zeros(8)])) == 0
    assert hull_volume(cube[:2]) == 0
    pts = np.vstack([np.zeros((5, 3)) + 0.1 * np.arange(5)[:, None], np.full((4, 3), 30.0)])
    assert count_clusters(pts, 5.0) == 2
    assert count_clusters(pts[:1]) == 1


def test_scatter_csv_layout():
    text = scatter_to_csv({"tpe": np.array([[1.0, 2.0, 3.0]])}, np.array([[0.0, 0.0, 0.0]]))
    lines = text.splitlines()
    assert lines[0] == "source,index,j1,j2,j3"
    assert lines[1] == "tpe,0,1.0,2.0,3.0" and lines[2].startswith("ik,0,")


def test_hull_area_counts_flat_regions():
    cube = np.array(list(itertools.product([0.0, 2.0], repeat=3)))
    assert hull_area(cube) == pytest.approx(24.0, rel=1e-6)
    square = np.column_stack([cube[:, :2], np.zeros(8)])
    assert hull_area(square) == pytest.approx(8.0, rel=1e-6)
    assert hull_area(np.column_stack([np.arange(5.0), np.zeros(5), np.zeros(5)])) == pytest.approx(0.0, abs=1e-6)
    assert hull_area(cube[:2]) == 0
