import os

import pytest

# acceptance lines collected by tests/test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(autouse=True)
def _single_thread_default(monkeypatch):
    if "CONC_LAB_THREADS" not in os.environ:
        monkeypatch.setenv("CONC_LAB_THREADS", "1")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
