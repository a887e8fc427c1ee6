from __future__ import annotations

import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one status line per acceptance criterion; printed in the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number: int, status: str, detail: str) -> None:
        line = f"[{status:4}] criterion {number:2d}: {detail}"
        lines.append((number, line))
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    # stable sort keeps sub-checks of one criterion in run order
    for _, line in sorted(lines, key=lambda item: item[0]):
        terminalreporter.write_line(line)
