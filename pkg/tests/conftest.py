import re

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def criterion(request):
    """``criterion(number, title, ok, detail)`` logs one PASS/FAIL line, then asserts ``ok``."""
    lines = request.config.stash[_LINES]

    def record(number, title, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail}"
        lines.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(re.search(r"\[\s*(\d+)\]", s).group(1))):
            terminalreporter.write_line(line)
