import numpy as np
import pytest
from scipy import integrate
from scipy.stats import chisquare

from cable_bbo.optimizer import (
    Dimension,
    ParzenEstimator,
    SearchSpace,
    TPEConfig,
    cable_space,
    default_gamma,
    motpe_minimize,
    random_search,
    tpe_minimize,
)


def test_dimension_validation():
    with pytest.raises(ValueError):
        Dimension("x", 1, 1)
    with pytest.raises(ValueError):
        Dimension("x", 0.5, 3, integer=True)
    assert Dimension("k", -2, 2, integer=True).kde_bounds == (-2.5, 2.5)


def test_gamma_schedule():
    assert [default_gamma(n) for n in (1, 4, 5, 40, 100, 1000)] == [1, 1, 2, 10, 25, 25]


def test_uniform_sampling_chi_square():
    space = SearchSpace((Dimension("k", 0, 9, integer=True), Dimension("x", 0, 1)))
    x = space.sample_uniform(np.random.default_rng(0), 20000)
    assert chisquare(np.bincount(x[:, 0].astype(int), minlength=10)).pvalue > 0.001
    assert chisquare(np.histogram(x[:, 1], bins=10, range=(0, 1))[0]).pvalue > 0.001


def test_parzen_density_normalised_continuous():
    space = SearchSpace((Dimension("x", -1, 2),))
    est = ParzenEstimator(np.array([[-0.9], [0.1], [0.15], [1.9]]), space)
    total, _ = integrate.quad(lambda t: np.exp(est.log_pdf([[t]]))[0], -1, 2, points=[-0.9, 0.1, 0.15, 1.9],
                              limit=200)
    assert total == pytest.approx(1.0, abs=1e-6)


def test_parzen_mass_normalised_integer_and_matches_samples():
    space = SearchSpace((Dimension("k", -5, 5, integer=True),))
    est = ParzenEstimator(np.array([[-4.0], [2.0], [3.0]]), space)
    ks = np.arange(-5, 6, dtype=float)[:, None]
    p = np.exp(est.log_pdf(ks))
    assert p.sum() == pytest.approx(1.0, abs=1e-9)
    draws = est.sample(np.random.default_rng(3), 30000)[:, 0]
    counts = np.bincount((draws + 5).astype(int), minlength=11)
    assert chisquare(counts, p * len(draws)).pvalue > 0.001


def test_parzen_samples_respect_bounds():
    space = cable_space()
    obs = np.array([[-80, 80, 0, 0.0], [80, -80, 79, 0.5]])
    x = ParzenEstimator(obs, space).sample(np.random.default_rng(1), 5000)
    assert all(space.contains(row) for row in x)


def test_tpe_deterministic_and_in_bounds():
    space = cable_space()
    f = lambda x: float(np.sum((x[:3] - 17) ** 2) + x[3])
    best_a, hist_a = tpe_minimize(f, space, 60, seed=4)
    best_b, hist_b = tpe_minimize(f, space, 60, seed=4)
    assert [t.params.tolist() for t in hist_a] == [t.params.tolist() for t in hist_b]
    assert all(space.contains(t.params) for t in hist_a)
    assert best_a.value == min(t.value for t in hist_a)


def test_tpe_beats_random_on_sphere():
    space = SearchSpace(tuple(Dimension(f"x{i}", -5, 5) for i in range(2)))
    f = lambda x: float(np.sum((x - 1.3) ** 2))
    tpe = np.median([tpe_minimize(f, space, 100, s)[0].value for s in range(10)])
    rnd = np.median([random_search(f, space, 100, s)[0].value for s in range(10)])
    assert tpe < rnd


def test_tpe_rejects_nan_and_bad_counts():
    space = SearchSpace((Dimension("x", 0, 1),))
    with pytest.raises(ValueError):
        tpe_minimize(lambda x: float("nan"), space, 3)
    with pytest.raises(ValueError):
        tpe_minimize(lambda x: 0.0, space, 0)


def test_motpe_spreads_along_tradeoff():
    space = SearchSpace((Dimension("x", 0, 1), Dimension("y", 0, 1)))
    trials = motpe_minimize(lambda v: (float(v[0] ** 2 + v[1]), float((1 - v[0]) ** 2 + v[1])), space, 120, 0,
                            TPEConfig())
    vals = np.array([t.values for t in trials])
    late = np.array([t.params for t in trials[60:]])
    # Good region is y ~ 0 while x spans the front.
    assert np.median(late[:, 1]) < 0.2
    assert np.ptp(late[:, 0]) > 0.5
    assert vals.shape == (120, 2)


def test_tpe_locates_one_dimensional_optimum():
    space = SearchSpace((Dimension("x", -10, 10),))
    best = [tpe_minimize(lambda x: float((x[0] - 3) ** 2), space, 200, s)[0].params[0] for s in range(20)]
    assert np.median(np.abs(np.array(best) - 3)) < 0.1
