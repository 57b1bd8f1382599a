import numpy as np
import pytest

ACCEPTANCE = []


def record(criterion, passed, detail):
    ACCEPTANCE.append((criterion, passed, detail))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for criterion, passed, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        terminalreporter.write_line(f"criterion {criterion:>2}: {status:7} {detail}")
