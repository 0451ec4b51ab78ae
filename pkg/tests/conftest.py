import sys
from pathlib import Path

# oracle helpers (gradcheck, reference) live next to the tests
sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.skipped:
        _ACCEPTANCE_RESULTS[report.nodeid] = "SKIP"
    elif report.when == "call":
        _ACCEPTANCE_RESULTS[report.nodeid] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_ACCEPTANCE_RESULTS):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{_ACCEPTANCE_RESULTS[nodeid]:4s}  {name}")
