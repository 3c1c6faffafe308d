from __future__ import annotations

from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"
SPL_DIR = FIXTURES / "spl"


@pytest.fixture
def fixtures() -> Path:
    return FIXTURES


def spl_bytes(name: str) -> bytes:
    return (SPL_DIR / name).read_bytes()


# One summary line per acceptance criterion, printed after the test run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
