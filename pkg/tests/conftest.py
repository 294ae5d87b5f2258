import pytest

_VERDICTS = []


@pytest.fixture
def verdict():
    """Record a one-line pass/fail verdict for the terminal summary."""
    def record(label, passed, detail):
        line = f"{label}: {'PASS' if passed else 'FAIL'} ({detail})"
        _VERDICTS.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
