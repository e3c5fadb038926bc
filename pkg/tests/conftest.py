from pathlib import Path

import pytest

from deepstdp import convnet
from deepstdp.numerics import RngStream

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture
def configs_dir():
    return CONFIGS


def reference_net(k=5, seed=0, in_shape=(1, 16, 16)):
    return convnet.init_params(in_shape, k, RngStream(seed))


def random_images(n, seed=1, in_shape=(1, 16, 16)):
    return RngStream(seed).normal(size=(n, *in_shape))


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.LINES, key=lambda s: int(s.split()[1].rstrip("."))):
        terminalreporter.write_line(line)
