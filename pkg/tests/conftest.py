import pytest

_VERDICTS: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the acceptance summary, then assert."""

    def record(criterion: str, ok: bool, detail: str) -> None:
        _VERDICTS.append(f"{criterion:<5} {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_VERDICTS, key=lambda s: int(s[2:5].strip())):
            terminalreporter.write_line(line)
