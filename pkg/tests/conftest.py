import pytest

_RESULTS: list[tuple[str, bool, str]] = []


@pytest.fixture
def record():
    """Record one acceptance verdict; the line is echoed now and in the terminal summary."""

    def _record(criterion: str, passed: bool, detail: str) -> bool:
        line = f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}"
        print(line)
        _RESULTS.append((criterion, passed, detail))
        return passed

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in _RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'} {criterion}: {detail}")
