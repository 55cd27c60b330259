import csv
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"

_criteria: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")
    config.addinivalue_line("markers", "slow: runs for more than a few seconds")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _criteria.setdefault(number, {"title": title, "tests": 0, "failed": [], "known": []})
    if report.when == "setup" and report.skipped:
        entry["failed"].append(item.name)
    if report.when != "call":
        return
    entry["tests"] += 1
    if hasattr(report, "wasxfail"):
        if report.skipped:
            entry["known"].append((item.name, report.wasxfail))
        else:
            entry["failed"].append(item.name)
    elif report.failed:
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        if entry["failed"] or entry["known"]:
            status = "FAIL"
        else:
            status = "PASS"
        tr.write_line(f"criterion {number:>2}: {status}  {entry['title']}")
        for name, reason in entry["known"]:
            tr.write_line(f"               {name}: {reason}")
        for name in entry["failed"]:
            tr.write_line(f"               {name}: unexpected failure")


@pytest.fixture(scope="session")
def amd_reference():
    """Strike, market mid and four reference model columns for the AMD chain."""
    with open(DATA / "amd_reference_prices.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {key: np.array([float(r[key]) for r in rows]) for key in rows[0]}
