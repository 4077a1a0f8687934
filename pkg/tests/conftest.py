import pytest

from kinlv import PAPER_INITIAL, TABLE1
from kinlv.ode import OdeSolverConfig, integrate_cv

# criterion -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def table1():
    return TABLE1


@pytest.fixture(scope="session")
def table1_cv():
    """Table 1 run with half-half risk, t in [0, 50]."""
    return integrate_cv(TABLE1, PAPER_INITIAL, OdeSolverConfig(t_end=50.0, output_dt=0.05))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
