import numpy as np
import pytest

from mongeplate.grid import GridDomain

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def unit17():
    return GridDomain.square(17)


@pytest.fixture
def rect():
    # deliberately anisotropic spacing
    return GridDomain(2.0, 1.0, 21, 9)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
