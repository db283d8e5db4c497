import functools

import pytest

from epdice.analysis import run_scenario, run_sweep
from epdice.calibration import load_calibration

TABLE_GRID = [("theta", [0.29, 0.5, 1.0, 1.3, 2.0, float("inf")]),
              ("beta_mu", [-0.01, 0.0, 0.01, 0.02, 0.03, 0.04])]

# filled by tests/test_acceptance.py, echoed at the end of the run
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def params():
    return load_calibration()


@functools.lru_cache(maxsize=None)
def _scenario(name):
    return run_scenario(name, load_calibration())


@pytest.fixture(scope="session")
def scenario():
    """Solved scenarios, shared by every test in the session."""
    return _scenario


@pytest.fixture(scope="session")
def table_sweep(params):
    return run_sweep(TABLE_GRID, params)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
