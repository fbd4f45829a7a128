"""Acceptance bookkeeping: one PASS/FAIL line per criterion after the run."""
from collections import defaultdict

import pytest

CRITERIA = {
    "AC1": "fs/4 demodulation exactness",
    "AC2": "fidelity budget numbers",
    "AC3": "spurious drive, worst case over phase",
    "AC4": "feedback latency and ledger agreement",
    "AC5": "differential jitter recovery",
    "AC6": "T1, T2* and Ramsey fringe fits",
    "AC7": "mixer pre-compensation",
    "AC8": "ADC spectral metrics",
    "AC9": "PLL phase determinism",
    "AC10": "multi-channel demodulation",
}

_outcomes: dict[str, list[str]] = defaultdict(list)
_criterion_of: dict[str, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id): acceptance criterion covered by a test")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m:
            _criterion_of[item.nodeid] = m.args[0]


def pytest_runtest_logreport(report):
    ac = _criterion_of.get(report.nodeid)
    if ac is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _outcomes[ac].append(report.outcome)


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter):
    if not _criterion_of:
        return
    terminalreporter.section("acceptance criteria")
    for ac, title in CRITERIA.items():
        results = _outcomes.get(ac)
        if not results:
            status = "NOT RUN"
        elif all(r == "passed" for r in results):
            status = "PASS"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"{status:7s} {ac:4s} {title}")
