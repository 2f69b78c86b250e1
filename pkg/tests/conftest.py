import numpy as np
import pytest
from hypothesis import settings

from westervelt.grid import build_grid
from westervelt.model import PhysicalParams

# Largest gaussian amplitude (u0 and u1 both) that survived 25 time units at
# gamma=1/2, c=beta=1, n=33, dt=0.05 was 0.9775 by bisection; the fixture
# keeps a factor of about four below the summed norm 2 * 0.9775.
DELTA_TEST = 0.5

ACCEPTANCE = {}

# fixed example generation keeps the suite reproducible run to run
settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")


@pytest.fixture
def canonical():
    return PhysicalParams(c=1.0, beta=1.0, gamma=0.5)


@pytest.fixture
def linear_params():
    return PhysicalParams(c=1.0, beta=1.0, gamma=0.0)


@pytest.fixture
def grid1d():
    return build_grid(1, (0.0, 1.0), 33)


@pytest.fixture
def grid2d():
    return build_grid(2, [(0.0, 1.0), (0.0, 1.0)], 9)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[key])
