import numpy as np
import pytest

from insensitize.grid import build_grid, indicator_mask


@pytest.fixture(scope="session")
def small_grid():
    return build_grid(1.0, 32, 1.0, 64)


@pytest.fixture(scope="session")
def control_grid():
    return build_grid(1.0, 64, 1.0, 256)


@pytest.fixture(scope="session")
def masks(small_grid):
    return indicator_mask(small_grid, 0.3, 0.6), indicator_mask(small_grid, 0.5, 0.8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def cnormal(rng, shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


# acceptance lines, printed once at the end of the session
RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
