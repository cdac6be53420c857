import math

import numpy as np
import pytest
from hypothesis import settings

from perwave.applications import gp_model, gp_pulse_primary, sine_gordon_profile, toy_model
from perwave.grid import constant_state
from perwave.solver import solve_localized

settings.register_profile("perwave", derandomize=True, deadline=None, print_blob=True)
settings.load_profile("perwave")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def toy0():
    return toy_model(0.0)


@pytest.fixture(scope="session")
def short_front(toy0):
    """Solved sine-Gordon front on [-12, 12] with h = 0.04 and constant end states."""
    sg = sine_gordon_profile(12.0, 0.04)
    ends = (constant_state([0.0], 2.0, 50), constant_state([2.0 * math.pi], 2.0, 50))
    return solve_localized(toy0, sg.replace(asymptotics=ends))


@pytest.fixture(scope="session")
def gp_half():
    return gp_model(0.5, 1.0)


@pytest.fixture(scope="session")
def gp_primary(gp_half):
    return gp_pulse_primary(gp_half)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
