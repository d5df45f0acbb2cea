import numpy as np
import pytest

from cable_bbo import dataset, model
from cable_bbo.sim import SimConfig

TINY_ARCH = model.Architecture(conv_channels=(4, 8), joint_hidden=(16, 16), fusion_hidden=32, image_bottleneck=16)


@pytest.fixture(scope="session")
def sim_cfg():
    return SimConfig()


@pytest.fixture(scope="session")
def small_ds(sim_cfg):
    return dataset.collect(60, seed=3, cfg=sim_cfg)


@pytest.fixture(scope="session")
def tiny_model(small_ds):
    trained, _ = model.train(small_ds, None, model.TrainConfig(epochs=100, batch_size=20, learning_rate=3e-3, seed=1), TINY_ARCH)
    return trained


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def acceptance_report():
    """Collects one PASS/FAIL line per acceptance criterion for the terminal summary."""
    def record(criterion: int, passed: bool, detail: str) -> bool:
        _ACCEPTANCE_LINES.append(f"criterion {criterion:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
