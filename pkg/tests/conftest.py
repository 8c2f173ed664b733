import pytest

_VERDICTS: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record and print the outcome of an acceptance criterion."""

    def record(number: int, ok: bool, summary: str):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {summary}"
        print(line)
        _VERDICTS[number] = (ok, summary)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_VERDICTS):
        ok, summary = _VERDICTS[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {summary}")
