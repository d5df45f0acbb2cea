import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist
from scipy.stats import wasserstein_distance

from cable_bbo.imaging import EmptyForegroundError
from cable_bbo.metrics import (
    bootstrap,
    bootstrap_difference,
    emd,
    image_emd,
    make_signature,
    signature,
    sinkhorn,
    success_rate_at,
    success_rates,
    transport,
)


def unit_pair(rng, n):
    a = rng.integers(0, 30, size=(n, 2)).astype(float)
    b = rng.integers(0, 30, size=(n, 2)).astype(float)
    return a, b


def assignment_oracle(a, b):
    c = cdist(a, b)
    r, k = linear_sum_assignment(c)
    return c[r, k].sum() / len(a)


def test_identical_signatures_cost_zero():
    s = make_signature([[0, 0], [3, 4]], [1, 1])
    assert emd(s, s) == 0.0


def test_translation_by_3_4_5():
    s = make_signature([[0, 0], [1, 2], [5, 1]], [1, 2, 3])
    assert emd(s, s.shifted((3, 4))) == pytest.approx(5.0, abs=1e-12)


def test_point_mass_split():
    a = make_signature([[0, 0]], [1])
    b = make_signature([[2, 0], [0, 4]], [1, 3])
    assert emd(a, b) == pytest.approx(0.25 * 2 + 0.75 * 4)


@pytest.mark.parametrize("seed", range(25))
def test_matches_assignment_oracle(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 21))
    a, b = unit_pair(rng, n)
    got = emd(make_signature(a, np.ones(n)), make_signature(b, np.ones(n)))
    assert got == pytest.approx(assignment_oracle(a, b), abs=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_matches_one_dimensional_closed_form(seed):
    rng = np.random.default_rng(100 + seed)
    xa, xb = rng.uniform(0, 20, 7), rng.uniform(0, 20, 11)
    wa, wb = rng.uniform(0.1, 1, 7), rng.uniform(0.1, 1, 11)
    got = emd(make_signature(np.column_stack([xa, np.zeros(7)]), wa),
              make_signature(np.column_stack([xb, np.zeros(11)]), wb))
    assert got == pytest.approx(wasserstein_distance(xa, xb, wa, wb), abs=1e-9)


def test_flow_marginals(rng):
    a = make_signature(rng.uniform(0, 10, (6, 2)), rng.uniform(0.1, 1, 6))
    b = make_signature(rng.uniform(0, 10, (9, 2)), rng.uniform(0.1, 1, 9))
    res = transport(a, b)
    np.testing.assert_allclose(res.flow.sum(axis=1), a.weights, atol=1e-12)
    np.testing.assert_allclose(res.flow.sum(axis=0), b.weights, atol=1e-12)
    assert np.all(res.flow >= -1e-15)
    assert res.cost == pytest.approx(np.sum(res.flow * cdist(a.support, b.support)))


def test_metric_axioms(rng):
    for _ in range(60):
        sigs = [make_signature(rng.integers(0, 12, (k, 2)), rng.uniform(0.1, 1, k))
                for k in rng.integers(1, 8, 3)]
        ab, bc, ac = emd(sigs[0], sigs[1]), emd(sigs[1], sigs[2]), emd(sigs[0], sigs[2])
        assert ab >= 0
        assert ab == pytest.approx(emd(sigs[1], sigs[0]), abs=1e-9)
        assert ac <= ab + bc + 1e-9


def test_sinkhorn_upper_bounds_and_approximates(rng):
    a = make_signature(rng.uniform(0, 20, (15, 2)), np.ones(15))
    b = make_signature(rng.uniform(0, 20, (15, 2)), np.ones(15))
    exact = emd(a, b)
    approx = sinkhorn(a, b, reg=0.05, n_iter=5000)
    assert exact - 1e-6 <= approx <= exact * 1.05 + 0.1
    assert emd(a, b, method="sinkhorn") > 0
    with pytest.raises(ValueError):
        emd(a, b, method="simplex")


def test_signature_threshold_and_weights():
    img = np.zeros((3, 4))
    img[1, 2] = 1.0
    img[2, 0] = 0.6
    img[0, 0] = 0.5
    s = signature(img, 0.5)
    assert s.support.tolist() == [[2, 1], [0, 2]]
    np.testing.assert_allclose(s.weights, [1 / 1.6, 0.6 / 1.6])
    with pytest.raises(EmptyForegroundError):
        signature(np.zeros((3, 3)))
    with pytest.raises(EmptyForegroundError):
        image_emd(img, np.zeros((3, 4)))


def test_success_rates_examples():
    costs = [100, 150, 200]
    assert success_rates(costs, [125, 175]) == pytest.approx([1 / 3, 2 / 3])
    assert success_rates(costs, [100]) == [0.0]
    assert success_rate_at(200.0)(np.array(costs)) == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        success_rates([], [1.0])


def test_bootstrap_matches_binomial_standard_error():
    n, p = 400, 0.3
    costs = np.where(np.arange(n) < p * n, 0.0, 10.0)
    mean, std = bootstrap(costs, success_rate_at(1.0), n_resamples=4000, seed=5)
    assert mean == pytest.approx(p, abs=0.005)
    assert std == pytest.approx(np.sqrt(p * (1 - p) / n), rel=0.08)


def test_bootstrap_constant_and_determinism():
    assert bootstrap(np.full(10, 2.0)) == (2.0, 0.0)
    x = np.random.default_rng(1).uniform(size=50)
    assert bootstrap(x, seed=3) == bootstrap(x, seed=3)
    with pytest.raises(ValueError):
        bootstrap([])


def test_bootstrap_difference_interval():
    rng = np.random.default_rng(0)
    b = rng.normal(10, 1, 200)
    a = b - 2 + rng.normal(0, 0.1, 200)
    est, lo, hi = bootstrap_difference(a, b, 2000, seed=1)
    assert lo < est < hi < 0
    assert est == pytest.approx(-2, abs=0.05)


def lp_oracle(a, b):
    from scipy.optimize import linprog

    c = cdist(a.support, b.support)
    n, m = c.shape
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        a_eq[n + j, j::m] = 1
    res = linprog(c.ravel(), A_eq=a_eq, b_eq=np.concatenate([a.weights, b.weights]), bounds=(0, None),
                  method="highs")
    return res.fun


@pytest.mark.parametrize("seed", range(30))
def test_general_weights_match_linear_program(seed):
    rng = np.random.default_rng(1000 + seed)
    n, m = rng.integers(1, 25, 2)
    # Small integer grid: many coincident pixels, ties and degenerate bases.
    a = make_signature(rng.integers(0, 6, (n, 2)), rng.integers(1, 4, n))
    b = make_signature(rng.integers(0, 6, (m, 2)), rng.integers(1, 4, m))
    assert emd(a, b) == pytest.approx(lp_oracle(a, b), abs=1e-9)


def test_binary_cable_images_shifted_by_one_pixel():
    img = np.zeros((42, 64))
    img[20, 5:60] = 1
    img[21, 5:60] = 1
    shifted = np.roll(img, 1, axis=1)
    assert image_emd(img, shifted) == pytest.approx(2 / 110 * 55, abs=1e-9)
