import pytest

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion."""
    lines = request.config.stash[_LINES_KEY]

    def record(number, ok, detail):
        lines.append((number, "PASS" if ok else "FAIL", detail))
        assert ok, f"criterion {number}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_LINES_KEY, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}")
