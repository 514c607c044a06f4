import numpy as np
import pytest

from roughdrift import besov
from roughdrift.drift import DriftSpec, mollify
from roughdrift.fbm import FbmConfig


@pytest.fixture
def lattice1d():
    return besov.SpatialLattice(1, 20.0, 2**12)


@pytest.fixture
def dirac_drift(lattice1d):
    return mollify(DriftSpec.dirac(1), 1e-2, lattice1d)


@pytest.fixture
def small_fbm():
    return FbmConfig(0.3, 256)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one verdict line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
