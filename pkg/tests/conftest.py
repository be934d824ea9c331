"""Shared fixtures and the per-criterion PASS/FAIL summary for the acceptance suite."""

import re

import pytest

# criterion number -> (name, [(passed, detail), ...]) across parametrized cases
_CRITERIA = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        name, cases = _CRITERIA.setdefault(int(m.group(1)), (m.group(2), []))
        cases.append((report.outcome == "passed", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num, (name, cases) in sorted(_CRITERIA.items()):
        verdict = "PASS" if all(ok for ok, _ in cases) else "FAIL"
        details = "; ".join(d for _, d in cases if d)
        line = f"{verdict} criterion {num:2d} {name}"
        terminalreporter.write_line(f"{line}: {details}" if details else line)


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement to the criterion's PASS/FAIL line."""
    def put(text: str) -> None:
        record_property("detail", text)
    return put
