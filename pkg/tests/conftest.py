import numpy as np
import pytest

from nodefrag.exponent import Stable, TruncatedMechanism, truncate
from nodefrag.sampler import RngStream

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def stable():
    return Stable(1.5)


@pytest.fixture(scope="session")
def trunc(stable):
    return truncate(stable, 1e-2)


@pytest.fixture
def rng():
    return RngStream(12345)


def hand_mechanism(c: float) -> TruncatedMechanism:
    """Truncated mechanism with a prescribed drain rate, for hand-built trees."""
    return TruncatedMechanism(Stable(1.5), 0.01, drift=0.0, jump_rate=1.0,
                              mean_jump_mass=c, drain_rate=c)


def within_se(est, target, z=3.0, extra=0.0):
    return abs(est.mean - target) <= z * est.std_error + extra


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
