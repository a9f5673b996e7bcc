import pytest

_LINES = []


@pytest.fixture
def report():
    """``report(n, ok, detail)`` records one acceptance line, echoed at the end of the run."""
    def record(n, ok, detail):
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append((n, line))
        print(line, flush=True)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_LINES):
            terminalreporter.write_line(line)
