import re

import numpy as np
import pytest

from persbev.geometry import CameraIntrinsics, make_frustum_grid, default_grid
from persbev.sampling import default_voxel_grid

_criteria = {}
_CRIT = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


@pytest.fixture(scope="session")
def pgrid():
    return default_grid()


@pytest.fixture(scope="session")
def pspec():
    return default_voxel_grid()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_grid():
    intr = CameraIntrinsics.centered(40.0, 64, 32)
    return make_frustum_grid(intr, stride=8, depth_bins=6, depth_min=2.0, depth_max=14.0)


def pytest_runtest_logreport(report):
    m = _CRIT.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        ok = _criteria.get(key, True) and report.outcome == "passed"
        _criteria[key] = ok


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_criteria):
        terminalreporter.write_line(f"criterion {key:2d}: {'PASS' if _criteria[key] else 'FAIL'}")
