import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cable_bbo.optimizer import (
    ParetoPoint,
    Trial,
    crowding_distance,
    nondominated_mask,
    nondominated_rank,
    pareto_front,
    select_execution,
)


def domination_oracle(v):
    n = len(v)
    keep = []
    for i in range(n):
        dominated = any(np.all(v[j] <= v[i]) and np.any(v[j] < v[i]) for j in range(n))
        repeat = any(np.array_equal(v[j], v[i]) for j in range(i))
        keep.append(not dominated and not repeat)
    return np.array(keep)


point_sets = st.integers(1, 30).flatmap(
    lambda n: arrays(np.float64, (n, 2), elements=st.integers(0, 6).map(float)))


@settings(max_examples=200, deadline=None)
@given(point_sets)
def test_mask_matches_oracle_2d(v):
    np.testing.assert_array_equal(nondominated_mask(v), domination_oracle(v))


@pytest.mark.parametrize("seed", range(5))
def test_mask_matches_oracle_3d(seed):
    v = np.random.default_rng(seed).integers(0, 5, size=(40, 3)).astype(float)
    np.testing.assert_array_equal(nondominated_mask(v), domination_oracle(v))


def test_mask_examples():
    v = np.array([[1, 3], [2, 2], [3, 1], [2, 3], [1, 3]], dtype=float)
    assert nondominated_mask(v).tolist() == [True, True, True, False, False]
    with pytest.raises(ValueError):
        nondominated_mask(np.zeros((0, 2)))


def test_rank_peels_fronts():
    v = np.array([[0, 0], [1, 1], [2, 2], [0, 3], [3, 0]], dtype=float)
    assert nondominated_rank(v).tolist() == [0, 1, 2, 1, 1]


def test_crowding_distance():
    v = np.array([[0, 4], [1, 2], [3, 1], [4, 0]], dtype=float)
    d = crowding_distance(v)
    assert np.isinf(d[0]) and np.isinf(d[3])
    assert d[1] == pytest.approx(3 / 4 + 3 / 4)
    assert d[2] == pytest.approx(3 / 4 + 2 / 4)


def _trial(i, sigma, g1):
    return Trial(i, np.array([0.0, 0.0, float(i), sigma]), (g1, -sigma))


def test_pareto_front_sorted_and_monotone():
    trials = [_trial(0, 0.0, 1.0), _trial(1, 0.1, 1.5), _trial(2, 0.05, 2.0), _trial(3, 0.1, 1.5),
              _trial(4, 0.3, 3.0), _trial(5, 0.2, 5.0)]
    front = pareto_front(trials)
    assert [p.trial for p in front] == [0, 1, 4]
    assert all(a.g1 < b.g1 and a.sigma < b.sigma for a, b in zip(front, front[1:]))
    with pytest.raises(ValueError):
        pareto_front([])


def test_select_execution_window_and_fallback():
    front = [ParetoPoint(np.zeros(3), s, g, i) for i, (s, g) in enumerate([(0.0, 1.0), (0.035, 2.0),
                                                                          (0.045, 2.5), (0.3, 9.0)])]
    assert select_execution(front).trial == 1
    assert select_execution(front, (0.1, 0.2)).trial == 2
    assert select_execution(front, (0.25, 0.4)).trial == 3
    assert select_execution(front[:1]).trial == 0
    with pytest.raises(ValueError):
        select_execution([])


def test_select_execution_fallback_prefers_nearest_sigma():
    front = [ParetoPoint(np.zeros(3), 0.0, 1.0, 0), ParetoPoint(np.zeros(3), 0.2, 3.0, 1)]
    assert select_execution(front).sigma == 0.0
    pair = [ParetoPoint(np.zeros(3), 0.035, 0.4, 0), ParetoPoint(np.zeros(3), 0.045, 0.2, 1)]
    assert select_execution(pair).g1 == 0.2
