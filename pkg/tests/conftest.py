from __future__ import annotations

import pytest

_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the summary, then assert on it."""

    def record(label: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        _LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
