import numpy as np
import pytest

from spindot.forward import Disk, Phantom, measure
from spindot.hamiltonian import build_kernel
from spindot.model import OpticalBackground, RoiGrid, build_sd_array

PAPER_SOURCES = np.arange(-30.0, 31.0, 4.0)
PAPER_DETECTORS = np.arange(-28.0, 29.0, 4.0)


@pytest.fixture(scope="session")
def bg():
    return OpticalBackground.from_tissue(0.02, 1.0, 1.37)


@pytest.fixture(scope="session")
def grid():
    return RoiGrid(nx=30, ny=30, h=1.0)


@pytest.fixture(scope="session")
def sd():
    return build_sd_array(PAPER_SOURCES, PAPER_DETECTORS)


@pytest.fixture(scope="session")
def kernel(grid, sd, bg):
    return build_kernel(grid, sd, bg, 0.2)


@pytest.fixture(scope="session")
def single_disk():
    return Phantom((Disk(0.0, 10.0, 2.5, 0.2),))


@pytest.fixture(scope="session")
def two_disks():
    return Phantom((Disk(-10.0, 10.0, 2.5, 0.2), Disk(10.0, 10.0, 2.5, 0.2)))


@pytest.fixture(scope="session")
def single_disk_data(bg, single_disk, sd):
    return measure(bg, single_disk, sd, noise_pct=3.0, seed=1)


@pytest.fixture(scope="session")
def small_setup(bg):
    """A 5 x 3 cell grid with 2 sources and 3 detectors for brute-force checks."""
    grid = RoiGrid(nx=2, ny=3, h=1.0)
    sd = build_sd_array([-4.0, 3.0], [-2.0, 0.0, 5.0])
    return grid, sd, build_kernel(grid, sd, bg, 0.2)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
