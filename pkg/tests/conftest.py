import numpy as np
import pytest

ACCEPTANCE = []


@pytest.fixture
def record():
    """Register one acceptance line: ``record(criterion, passed, detail)``."""
    def _record(criterion, passed, detail):
        ACCEPTANCE.append((criterion, bool(passed), detail))
        print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'}: {detail}")
    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda r: (int(r[0].rstrip("abc")), r[0])):
        terminalreporter.write_line(f"criterion {crit:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
