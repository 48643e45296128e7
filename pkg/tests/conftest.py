import pytest

_LINES = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line; printed together in the terminal summary."""
    lines = request.config.stash.setdefault(_LINES, [])

    def record(number, passed, detail):
        status = "SKIP" if passed is None else "PASS" if passed else "FAIL"
        lines.append(f"criterion {number}: {status} {detail}")
        return passed

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
