"""Shared fixtures and the acceptance summary printed at the end of the run."""

import pytest

ACCEPTANCE_LINES = []


def record_acceptance(number, title, passed, detail=""):
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {title}"
    if detail:
        line += f" ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


@pytest.fixture
def acceptance():
    return record_acceptance


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
