import numpy as np
import pytest

from cable_bbo import model
from cable_bbo.model import Architecture, ForwardModel, TrainConfig, TrainingError

ARCH = Architecture(width=16, height=10, conv_channels=(2, 3), joint_hidden=(5, 4), fusion_hidden=6,
                    image_bottleneck=4)


def batch(rng, n=3, arch=ARCH):
    imgs = (rng.uniform(size=(n, arch.height, arch.width)) < 0.2).astype(float)
    joints = rng.uniform(size=(n, 6))
    targets = (rng.uniform(size=(n, arch.height, arch.width)) < 0.2).astype(float)
    return imgs, joints, targets


def test_shapes_and_range(rng):
    m = ForwardModel(ARCH, seed=0)
    imgs, joints, _ = batch(rng)
    out = m.forward(imgs, joints)
    assert out.shape == (3, 10, 16)
    assert np.all((out > 0) & (out < 1))
    with pytest.raises(ValueError):
        m.forward(imgs[:, :5], joints)
    with pytest.raises(ValueError):
        m.forward(imgs, joints[:, :5])


@pytest.mark.parametrize("arch", [ARCH, Architecture(width=16, height=10, conv_channels=(2,), joint_hidden=(3,),
                                                     fusion_hidden=5)])
def test_parameter_gradients_match_finite_differences(arch):
    rng = np.random.default_rng(7)
    m = ForwardModel(arch, seed=1)
    # Move every bias off zero so no ReLU input sits exactly on its kink.
    for name, p in m.params.items():
        p += rng.normal(0, 0.05, p.shape)
    imgs, joints, targets = batch(rng, arch=arch)
    _, _, grads = m.loss_and_grads(imgs, joints, targets)
    h = 1e-6
    for name, p in m.params.items():
        for flat in rng.choice(p.size, size=min(4, p.size), replace=False):
            idx = np.unravel_index(flat, p.shape)
            old = p[idx]
            p[idx] = old + h
            up = m.loss_and_grads(imgs, joints, targets)[0]
            p[idx] = old - h
            dn = m.loss_and_grads(imgs, joints, targets)[0]
            p[idx] = old
            fd = (up - dn) / (2 * h)
            assert grads[name][idx] == pytest.approx(fd, rel=1e-4, abs=1e-9), name


def test_conditioned_model_agrees_with_forward(rng):
    m = ForwardModel(ARCH, seed=2)
    imgs, joints, _ = batch(rng, n=1)
    cm = m.condition(imgs[0], joints[0, :3])
    q = rng.uniform(size=(4, 3))
    full = m.forward(np.repeat(imgs, 4, axis=0), np.column_stack([np.repeat(joints[:, :3], 4, axis=0), q]))
    np.testing.assert_allclose(cm.predict(q), full, atol=1e-12)
    np.testing.assert_allclose(cm.predict(q[0]), full[0], atol=1e-12)
    np.testing.assert_allclose(model.predict(m, imgs[0], joints[0, :3], q[1]), full[1], atol=1e-12)


def test_input_gradient_matches_finite_differences(rng):
    m = ForwardModel(ARCH, seed=3)
    imgs, joints, targets = batch(rng, n=1)
    cm = m.condition(imgs[0], joints[0, :3])
    weights = rng.normal(size=(10, 16))

    def cost(pred):
        return np.sum(weights * pred**2, axis=(1, 2)), 2 * weights * pred

    q = rng.uniform(0.1, 0.9, 3)
    c, g = cm.input_gradient(q, cost)
    assert c == pytest.approx(cost(cm.predict(q[None]))[0][0])
    h = 1e-6
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd = (cost(cm.predict((q + e)[None]))[0][0] - cost(cm.predict((q - e)[None]))[0][0]) / (2 * h)
        assert g[k] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_checkpoint_round_trip(tmp_path, rng):
    m = ForwardModel(ARCH, seed=4)
    path = tmp_path / "m.fm"
    model.save(m, path)
    back = model.load(path)
    assert back.arch == m.arch
    imgs, joints, _ = batch(rng)
    np.testing.assert_allclose(back.forward(imgs, joints), m.forward(imgs, joints), atol=1e-5)
    model.save(back, tmp_path / "again.fm")
    assert (tmp_path / "again.fm").read_bytes() == path.read_bytes()
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(ValueError):
        model.load(path)


def test_training_reduces_loss_and_is_deterministic(small_ds):
    arch = Architecture(conv_channels=(2,), joint_hidden=(8,), fusion_hidden=8)
    cfg = TrainConfig(epochs=3, seed=5, learning_rate=3e-3)
    a, hist = model.train(small_ds, None, cfg, arch)
    b, _ = model.train(small_ds, None, cfg, arch)
    before = model.evaluate_mse(ForwardModel(arch, seed=0), small_ds)
    assert hist[-1]["train_mse"] < before
    assert all(np.array_equal(a.params[k], b.params[k]) for k in a.params)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_training_divergence_raises(small_ds):
    arch = Architecture(conv_channels=(2,), joint_hidden=(8,), fusion_hidden=8)
    with pytest.raises(TrainingError) as info:
        model.train(small_ds, None, TrainConfig(epochs=2, learning_rate=np.inf), arch)
    assert info.value.checkpoint is not None


def test_tiny_model_fixture_learned(tiny_model, small_ds):
    mean_img = small_ds.images_t1.mean(axis=0)
    baseline = float(np.mean((small_ds.images_t1 - mean_img) ** 2))
    assert model.evaluate_mse(tiny_model, small_ds) < baseline
