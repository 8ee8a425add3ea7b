import numpy as np
import pytest

from noisyguess.simplex import Channel, Distribution

# nodeid -> (criterion number, title); filled at collection
_criterion_of = {}
# criterion number -> (title, passed, seconds)
_outcomes = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criterion_of[item.nodeid] = (m.args[0], m.args[1])


def pytest_runtest_logreport(report):
    if report.nodeid not in _criterion_of:
        return
    # a failing setup counts; otherwise only the call phase decides
    if report.when != "call" and report.outcome == "passed":
        return
    number, title = _criterion_of[report.nodeid]
    _outcomes[number] = (title, report.outcome == "passed", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_outcomes):
        title, ok, seconds = _outcomes[number]
        terminalreporter.write_line(f"AC{number:<2d} {'PASS' if ok else 'FAIL'}  {title}  ({seconds:.1f}s)")


@pytest.fixture
def binary_source():
    return Distribution([0.25, 0.75])


@pytest.fixture
def bsc35():
    return Channel.bsc(0.35)
