import math
import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lerayns.grid import Grid
from lerayns.initial_data import localized_random, taylor_green_2d, taylor_green_3d

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def grid2():
    return Grid(2, 32)


@pytest.fixture
def grid3():
    return Grid(3, 16)


@pytest.fixture
def box3():
    """A box large enough to hold localized data away from its edges."""
    return Grid(3, 32, 8 * math.pi)


@pytest.fixture
def tg2(grid2):
    return taylor_green_2d(grid2)


@pytest.fixture
def tg3(grid3):
    return taylor_green_3d(grid3)


@pytest.fixture
def blob(box3):
    return localized_random(box3, seed=7, k0=1.0, energy=1.0, width=2.0)


def random_real(grid, ncomp=None, seed=0):
    rng = np.random.default_rng(seed)
    shape = grid.shape if ncomp is None else (ncomp,) + grid.shape
    return rng.standard_normal(shape)


# one pass/fail line per acceptance criterion, printed after the run
_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and report.passed:
        return
    number, title = marker.args
    status = "PASS" if report.passed else "FAIL"
    if number not in _CRITERIA or status == "FAIL":
        _CRITERIA[number] = (title, status)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d} {status}  {title}")
