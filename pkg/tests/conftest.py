import pytest

from shsa.config import bundled, parse_kb_file
from shsa.harness.scenario import parse_scenario_file


@pytest.fixture
def highway():
    """Bundled highway knowledge base and its itom registry (fresh copy per test)."""
    return parse_kb_file(bundled("highway.kb"))


@pytest.fixture(scope="session")
def reference_scenario():
    return parse_scenario_file(bundled("highway.scn"))


@pytest.fixture(scope="session")
def reference_run(reference_scenario):
    from shsa.harness.simulation import run_scenario

    return run_scenario(reference_scenario)


@pytest.fixture(scope="session")
def nofault_run(reference_scenario):
    from shsa.harness.simulation import run_scenario

    return run_scenario(reference_scenario.without_faults())


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
