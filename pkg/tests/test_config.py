import pytest

from cable_bbo.config import ConfigError, ExperimentConfig, load_config, paper_scale, parse_config


def test_defaults():
    cfg = parse_config("")
    assert cfg == ExperimentConfig(arch=cfg.arch)
    assert cfg.sim.arm.link_lengths_mm == (80.0, 70.0, 70.0)
    assert cfg.dims == (64, 42) and cfg.arch.width == 64


def test_full_sections():
    text = """
[sim]
link_lengths = 100, 60, 60
joint_limits = -80:80, -90:90, -90:90
cable_length = 200
node_count = 20
stiffness = 50000
damping = 20
friction = 0.25
static_friction = 0.4
drag = 0.2
dt = 0.001
motion_time = 0.3
settle_speed = 2
settle_timeout = 4
[imaging]
width = 32
height = 21
[dataset]
steps = 100
[model]
conv_channels = 4, 8
joint_hidden = 16
epochs = 3
restore_best = no
[optimizer]
motpe_trials = 50
sigma_window = 0.02, 0.06
n_candidates = 12
[metrics]
percentiles = 20, 40
[experiment]
seed = 9
episodes = 4
methods = tpe, motpe
"""
    cfg = parse_config(text)
    assert cfg.sim.arm.link_lengths_mm == (100.0, 60.0, 60.0)
    assert cfg.sim.arm.joint_limits_deg[0] == (-80.0, 80.0)
    assert cfg.sim.cable.node_count == 20 and cfg.sim.cable.dt_s == 0.001
    assert cfg.sim.settle_timeout_s == 4.0
    assert cfg.dims == (32, 21) and cfg.arch.width == 32 and cfg.arch.conv_channels == (4, 8)
    assert cfg.train.epochs == 3 and cfg.train.restore_best is False
    assert cfg.suite.motpe_trials == 50 and cfg.suite.sigma_window == (0.02, 0.06)
    assert cfg.suite.tpe.n_candidates == 12
    assert cfg.percentiles == (20.0, 40.0)
    assert cfg.seed == 9 and cfg.suite.n_episodes == 4 and cfg.suite.methods == ("tpe", "motpe")


@pytest.mark.parametrize("text", [
    "[sim]\nunknown_key = 1\n",
    "[nonsense]\nx = 1\n",
    "[sim]\nnode_count = many\n",
    "[sim]\nnode_count = 1\n",
    "[sim]\njoint_limits = -90\n",
    "[experiment]\nmethods = newton\n",
    "no section header",
])
def test_rejects_bad_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_seed_override_from_environment(tmp_path):
    path = tmp_path / "c.ini"
    path.write_text("[experiment]\nseed = 3\n")
    assert load_config(str(path), env={}).seed == 3
    assert load_config(str(path), env={"CABLE_BBO_SEED": "11"}).seed == 11
    with pytest.raises(ConfigError):
        load_config(str(path), env={"CABLE_BBO_SEED": "x"})
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.ini"), env={})


def test_paper_scale():
    cfg = paper_scale(ExperimentConfig())
    assert (cfg.dataset_steps, cfg.suite.motpe_trials, cfg.suite.n_episodes) == (12000, 1000, 150)
