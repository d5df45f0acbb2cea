import numpy as np
import pytest

from cable_bbo import dataset
from cable_bbo.optimizer import (
    GradientConfig,
    InferenceProblem,
    eval_distance_cost,
    eval_g1,
    eval_mse,
    gradient_minimize,
    reconstruction_loss,
    run_gradient,
    run_motpe,
    run_tpe,
)


@pytest.fixture(scope="module")
def problem(tiny_model, small_ds):
    i = 7
    j_t = dataset.denormalize_joints(small_ds.joints_t[i])
    return InferenceProblem(tiny_model, small_ds.images_t[i], j_t, small_ds.images_t1[i + 5], m=50, noise_seed=3)


def test_reconstruction_loss_example():
    pred = np.zeros((1, 2, 2))
    target = np.array([[1.0, 0.0], [0.5, 0.0]])
    assert reconstruction_loss(pred, target)[0] == pytest.approx(0.5 * 1.25)


def test_g1_zero_sigma_is_deterministic_loss(problem, rng):
    for _ in range(10):
        mu = rng.integers(-80, 81, 3).astype(float)
        assert problem.g1(mu, 0.0) == problem.recon(problem.normalize(mu))[0]


def test_g1_common_random_numbers(problem):
    mu = np.array([10.0, -20.0, 30.0])
    assert problem.g1(mu, 0.3) == problem.g1(mu, 0.3)
    with pytest.raises(ValueError):
        problem.g1(mu, -0.1)


def test_g1_monte_carlo_is_mean_over_clipped_samples(problem):
    mu = np.array([85.0, 0.0, -40.0])
    sigma = 0.4
    q = np.clip(problem.normalize(mu) + sigma**2 * problem.noise, 0, 1)
    expected = np.mean([problem.recon(row)[0] for row in q])
    assert problem.g1(mu, sigma) == pytest.approx(expected, rel=1e-12)


def test_wrappers_agree(problem, tiny_model, small_ds):
    i = 7
    j_t = dataset.denormalize_joints(small_ds.joints_t[i])
    mu = np.array([5.0, 6.0, 7.0])
    target = small_ds.images_t1[i + 5]
    assert eval_g1(tiny_model, small_ds.images_t[i], j_t, mu, 0.0, target) == problem.g1(mu, 0.0)
    assert eval_mse(tiny_model, small_ds.images_t[i], j_t, mu, target) == pytest.approx(
        problem.mse(problem.normalize(mu))[0])
    assert eval_distance_cost(tiny_model, small_ds.images_t[i], j_t, mu, target) >= 0


@pytest.mark.parametrize("kind", ["mse", "distance_image"])
def test_input_gradients_central_differences(problem, rng, kind):
    h = 1e-6
    for _ in range(5):
        q = rng.uniform(0.05, 0.95, 3)
        cost, grad = problem.cost_and_grad(q, kind)
        ref = np.empty(3)
        for k in range(3):
            e = np.zeros(3)
            e[k] = h
            ref[k] = (problem.cost_and_grad(q + e, kind)[0] - problem.cost_and_grad(q - e, kind)[0]) / (2 * h)
        assert np.linalg.norm(grad - ref) <= 1e-4 * np.linalg.norm(ref) + 1e-12


def test_gradient_minimize_descends_and_stays_in_box(problem):
    init = np.array([[-80.0, 80.0, 0.0], [60.0, -10.0, 45.0]])
    out, trace = gradient_minimize(problem, init, "mse", GradientConfig(steps=60), trace=True)
    assert out.shape == (2, 3)
    assert np.all(np.abs(out) <= 90)
    assert np.all(trace[-1] <= trace[0] + 1e-12)
    single = gradient_minimize(problem, init[0], "mse", GradientConfig(steps=60))
    np.testing.assert_allclose(single, out[0])
    with pytest.raises(ValueError):
        problem.cost_and_grad(np.full(3, 0.5), "hinge")


def test_search_methods(problem):
    g = run_gradient(problem, seed=1, kind="distance_image", cfg=GradientConfig(steps=20))
    assert g.method == "gradient_dist" and g.sigma == 0
    t = run_tpe(problem, 30, seed=2)
    assert all(np.all(tr.params[:3] == np.round(tr.params[:3])) for tr in t.history)
    assert problem.g1(t.joints_deg, 0) == min(tr.value for tr in t.history)
    mo = run_motpe(problem, 40, seed=3)
    assert mo.front and 0 <= mo.sigma <= 0.5
    sig = [p.sigma for p in mo.front]
    assert sig == sorted(sig)
    assert any(np.array_equal(p.mu, mo.joints_deg) for p in mo.front)


def test_g1_monte_carlo_converges(tiny_model, small_ds, rng):
    for k in range(10):
        i = int(rng.integers(len(small_ds)))
        j_t = dataset.denormalize_joints(small_ds.joints_t[i])
        target = small_ds.images_t1[int(rng.integers(len(small_ds)))]
        mu = rng.integers(-80, 81, 3).astype(float)
        sigma = float(rng.uniform(0.1, 0.5))
        small = eval_g1(tiny_model, small_ds.images_t[i], j_t, mu, sigma, target, m=200, seed=k)
        large = eval_g1(tiny_model, small_ds.images_t[i], j_t, mu, sigma, target, m=2000, seed=100 + k)
        assert small == pytest.approx(large, rel=0.05)


def test_gradient_minimize_zero_gradient_returns_init(tiny_model, small_ds):
    flat = tiny_model.copy()
    for name in flat.params:
        if name.startswith("joint") or name == "fuse_joint.w":
            flat.params[name] = np.zeros_like(flat.params[name])
    j_t = dataset.denormalize_joints(small_ds.joints_t[0])
    prob = InferenceProblem(flat, small_ds.images_t[0], j_t, small_ds.images_t1[0])
    init = np.array([12.0, -40.0, 33.0])
    for kind in ("mse", "distance_image"):
        np.testing.assert_allclose(gradient_minimize(prob, init, kind, GradientConfig(steps=50)), init, atol=1e-12)
