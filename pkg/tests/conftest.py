"""Shared test plumbing: the acceptance suite records one line per criterion
and the terminal summary prints them after the run."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def record_criterion():
    def _record(tag, passed, detail=""):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] {tag}" + (f" -- {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
