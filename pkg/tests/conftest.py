import numpy as np
import pytest

from dispflow.curve import DiscreteCurve, GridSpec
from dispflow.workbench.initial import great_circle, perturbed_great_circle

# (criterion number, passed, detail) collected by the acceptance suite
ACCEPTANCE = []


def record(number, title, passed, detail):
    line = f"ACCEPTANCE {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)


def random_sphere_points(rng, n):
    p = rng.normal(size=(n, 3))
    return p / np.linalg.norm(p, axis=1)[:, None]


def random_tangent(rng, p):
    v = rng.normal(size=p.shape)
    return v - np.einsum("ij,ij->i", v, p)[:, None] * p


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def grid16():
    return GridSpec(16, 2 * np.pi)


@pytest.fixture
def grid32():
    return GridSpec(32, 2 * np.pi)


@pytest.fixture
def circle16(grid16):
    return DiscreteCurve(grid16, great_circle(grid16))


@pytest.fixture
def wavy32(grid32):
    return DiscreteCurve(grid32, perturbed_great_circle(grid32, 1e-2, 2))
