import os
import sys
import time

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", deadline=None, max_examples=500)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def pytest_configure(config):
    config._psdm_criteria = {}


def pytest_runtest_setup(item):
    if item.get_closest_marker("criterion") and not hasattr(item.config, "_psdm_acceptance_t0"):
        item.config._psdm_acceptance_t0 = time.perf_counter()


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    res = item.config._psdm_criteria.setdefault(n, [title, True])
    if call.excinfo is not None and not call.excinfo.errisinstance(pytest.skip.Exception):
        res[1] = False


def pytest_terminal_summary(terminalreporter, config):
    results = config._psdm_criteria
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        title, ok = results[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}  {title}")
