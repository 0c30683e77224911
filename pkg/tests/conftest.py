"""Collects the acceptance verdicts and prints one line per criterion at the end of the run."""

import re

_VERDICTS = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("summary", "")
        _VERDICTS[key] = (m.group(2).replace("_", " "), "PASS" if report.passed else "FAIL", detail)


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_VERDICTS):
        name, verdict, detail = _VERDICTS[key]
        line = f"criterion {key} [{verdict}] {name}"
        terminalreporter.write_line(line + (f": {detail}" if detail else ""))
