import os
import warnings

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(autouse=True)
def _quiet_overflow():
    # optimizer line searches probe extreme hyperparameters on purpose
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


# ---------------------------------------------------------------- acceptance summary

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config._criteria = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    ok = call.excinfo is None
    if not ok and call.excinfo.errisinstance(pytest.skip.Exception):
        return
    item.config._criteria[number] = (ok, title, detail)


def pytest_terminal_summary(terminalreporter, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(crit):
        ok, title, detail = crit[n]
        line = f"{'PASS' if ok else 'FAIL'}  criterion {n:2d}: {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
