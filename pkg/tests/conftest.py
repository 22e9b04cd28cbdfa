import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not (report.when == "setup" and report.failed):
        return
    number, title = marker.args
    details = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if report.failed and not details:
        details = str(report.longrepr).strip().splitlines()[-1][:160]
    _CRITERIA[number] = ("PASS" if report.passed else "FAIL", title, details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, title, details = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] {number:2d}. {title}" + (f" -- {details}" if details else ""))
