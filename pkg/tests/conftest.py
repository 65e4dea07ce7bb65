"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

import re

_outcomes: dict[str, str] = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = f"criterion {int(m.group(1)):2d} {m.group(2).replace('_', ' ')}"
    if report.when == "call" or report.outcome != "passed":
        if _outcomes.get(key) != "FAIL":
            _outcomes[key] = "PASS" if report.outcome == "passed" else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_outcomes):
        terminalreporter.write_line(f"{_outcomes[key]}  {key}")
