"""Collects acceptance-criterion outcomes and prints one line per criterion."""
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))

CRITERIA = {
    "A1": "change statistics: incremental equals brute force",
    "A2": "MPLE correctness",
    "A3": "parameter recovery",
    "A4": "sampler validity against exact enumeration",
    "A5": "mixing arithmetic and fixture rows",
    "A6": "probability plumbing",
    "A7": "reproducibility across worker counts",
    "A8": "Table-1 model shape on a synthetic panel",
}

_criterion_of: dict[str, str] = {}
_outcomes: dict[str, list[str]] = {}
_durations: dict[str, float] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark and mark.args:
            _criterion_of[item.nodeid] = mark.args[0]


def pytest_runtest_logreport(report):
    key = _criterion_of.get(report.nodeid)
    if key is None:
        return
    _durations[key] = _durations.get(key, 0.0) + report.duration
    if report.failed:
        _outcomes.setdefault(key, []).append("FAIL")
    elif report.when == "call":
        _outcomes.setdefault(key, []).append("SKIP" if report.skipped else "PASS")
    elif report.skipped:
        _outcomes.setdefault(key, []).append("SKIP")


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key, title in CRITERIA.items():
        results = _outcomes.get(key)
        if not results:
            continue
        status = "FAIL" if "FAIL" in results else ("SKIP" if "PASS" not in results else "PASS")
        terminalreporter.write_line(f"{key} {status:4s} {title} ({_durations.get(key, 0):.1f} s)")
