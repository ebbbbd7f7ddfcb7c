import pytest

# "criterion N PASS|FAIL: detail" lines collected by test_acceptance
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    def record(n: int, title: str, ok: bool, detail: str) -> bool:
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
