import pytest

from supercrit import suites

# filled by test_acceptance.py; printed once at the end of the session
ACCEPTANCE_LINES = {}


@pytest.fixture(scope="session")
def kernel_grid():
    """The d = 1 Monte Carlo / PDE kernel grid shared by criteria 4 and 13."""
    return suites.kernel_rows(suites.ACCEPT_MC)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
