import pytest

# (criterion id, title, passed, detail) lines collected by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[str, str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for cid, title, ok, detail in sorted(ACCEPTANCE_LINES, key=lambda x: _order(x[0])):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}")


def _order(cid: str):
    digits = "".join(ch for ch in cid if ch.isdigit())
    return int(digits), cid


@pytest.fixture
def acceptance():
    def record(cid, title, ok, detail):
        ACCEPTANCE_LINES.append((cid, title, bool(ok), detail))
        print(f"[{'PASS' if ok else 'FAIL'}] {cid} {title}: {detail}")
        assert ok, f"{cid} {title}: {detail}"
    return record
