import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from aperion.cocycle import JacobiOp
from aperion.elliptic_bridge import EllipticOp
from aperion.frequency import GOLDEN
from aperion.torus_fourier import TorusFun, weighted_length

settings.register_profile("aperion", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("aperion")

SILVER_SQRT3 = (math.sqrt(2) - 1, math.sqrt(3) - 1)


def random_modes(rng, dim, count, K, amp=1.0):
    modes = {}
    while len(modes) < count:
        k = tuple(int(x) for x in rng.integers(-3, 4, dim))
        if weighted_length(k) <= K:
            modes[k] = complex(*rng.normal(size=2)) * amp
    return TorusFun.from_modes(modes, dim, K).real_part()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def desk_jacobi():
    return JacobiOp.build(0.5, GOLDEN, V=TorusFun.cos(1, 0.01, dim=1))


@pytest.fixture(scope="session")
def desk_elliptic():
    return EllipticOp.build(GOLDEN, 1.0 + TorusFun.cos(1, 0.01, dim=1), 0.4, TorusFun.cos(1, 0.01, dim=1))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
