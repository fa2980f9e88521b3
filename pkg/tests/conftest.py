import pytest

# criterion id -> (passed, detail, seconds); filled by tests/test_acceptance.py
ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(cid, ok, detail, seconds):
        ACCEPTANCE[cid] = (bool(ok), detail, seconds)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c.split("-")[0])):
        ok, detail, secs = ACCEPTANCE[cid]
        tr.write_line(f"criterion {cid:<22} {'PASS' if ok else 'FAIL'}  {secs:7.1f}s  {detail}")
