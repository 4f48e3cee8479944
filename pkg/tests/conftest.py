import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lmms.core import FiniteLMMS
from lmms.reconstruct import make_rng
from lmms.sprinkle import random_causet

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def i2a():
    return FiniteLMMS.from_matrix([[0.0, 1.0], [0.0, 0.0]], labels=["a", "b"])


@pytest.fixture
def i2b():
    return FiniteLMMS.from_matrix([[0.0, 2.0], [0.0, 0.0]], labels=["a'", "b'"])


def random_space(rng: np.random.Generator, n: int, random_weights: bool = True) -> FiniteLMMS:
    """Random weighted causet with random density and scale."""
    return random_causet(n, float(rng.random()), float(rng.uniform(0.2, 2.0)),
                         int(rng.integers(1 << 62)), random_weights=random_weights)


def random_integer_space(rng: np.random.Generator, n: int) -> FiniteLMMS:
    """Causet with integer edge lengths, so distinct pairs often share gaps."""
    base = random_causet(n, float(rng.random()), 1.0, int(rng.integers(1 << 62)))
    tau = np.ceil(base.tau * 3)
    w = rng.integers(1, 4, n).astype(float)
    return FiniteLMMS.from_matrix(tau, w / w.sum())


def weight_preserving_relabel(space: FiniteLMMS, rng: np.random.Generator) -> FiniteLMMS:
    perm = rng.permutation(space.n)
    return space.relabel(perm, labels=[f"r{k}" for k in range(space.n)])


@pytest.fixture
def rng():
    return make_rng(12345)
