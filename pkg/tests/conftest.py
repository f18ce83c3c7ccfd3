"""Collects acceptance-criterion outcomes and prints one line per criterion."""
from collections import OrderedDict

import pytest

_outcomes = OrderedDict()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    report = outcome.get_result()
    name = marker.args[0]
    # a criterion passes only if every test tagged with it passes
    if report.failed or (report.when == "call" and report.skipped):
        _outcomes[name] = "FAIL"
    elif report.when == "call":
        _outcomes.setdefault(name, "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for name, status in _outcomes.items():
        terminalreporter.write_line(f"{status}  {name}")
