import pytest

ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line for an acceptance criterion."""
    def record(number, ok, detail):
        ACCEPTANCE.append((number, ok, detail))
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
