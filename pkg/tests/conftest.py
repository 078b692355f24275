import warnings

import numpy as np
import pytest

warnings.filterwarnings("ignore", message=".*TBB.*")

from wnnc.geometry import PointCloud, normalize_cloud  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def unit_sphere_points(n, seed=0):
    p = np.random.default_rng(seed).normal(size=(n, 3))
    return p / np.linalg.norm(p, axis=1, keepdims=True)


@pytest.fixture(scope="session")
def cube_cloud_300():
    pts = np.random.default_rng(7).uniform(-1, 1, size=(300, 3))
    return PointCloud(pts)


@pytest.fixture(scope="session")
def sphere_cloud_500():
    return normalize_cloud(unit_sphere_points(500, seed=3))
