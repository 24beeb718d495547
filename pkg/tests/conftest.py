"""Shared pytest plumbing: the acceptance suite records one line per
criterion and this hook replays them in the terminal summary, so the
pass/fail ledger is visible even without -s."""

import pytest

_acceptance_lines = []


@pytest.fixture
def acceptance_record():
    def record(line: str):
        _acceptance_lines.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in _acceptance_lines:
            terminalreporter.write_line(line)
