import numpy as np
import pytest

from ifsdyn import ifs as I

CAT = ((2, 1), (1, 1))


@pytest.fixture(scope="session")
def cat():
    return I.affine_torus(CAT, 0.05, 0.01)


@pytest.fixture(scope="session")
def rotation():
    return I.rotation_circle(0.0, 1.0, 1e-3)


@pytest.fixture(scope="session")
def cantor():
    return I.affine_1d([(1 / 3, 0.0), (1 / 3, 2 / 3)])


@pytest.fixture(scope="session")
def doubling():
    return I.doubling_circle(0.0, 1.0, 1e-2)


def rng(seed):
    return np.random.Generator(np.random.Philox(seed))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
