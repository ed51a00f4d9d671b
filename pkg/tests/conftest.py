import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    """Record one acceptance line; it is echoed now and again in the terminal summary."""
    def record(number, title, passed, detail):
        line = "CRITERION %2d %-4s %s | %s" % (number, "PASS" if passed else "FAIL", title, detail)
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
