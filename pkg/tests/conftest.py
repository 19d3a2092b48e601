import pytest

from pollroute.equilibrium import solve_equilibrium
from pollroute.model import ModelParams
from pollroute.social import social_solve


@pytest.fixture(scope="session")
def example():
    """Arrival 0.3, service 0.7, busy-queue cost 6, idle-queue cost 1."""
    return ModelParams(0.3, 0.7, 6.0, 1.0)


@pytest.fixture(scope="session")
def equilibrium(example):
    return solve_equilibrium(example, 64, 64, 1e-9, check_monotone=True)


@pytest.fixture(scope="session")
def social(example):
    return social_solve(example, 64, 64, 1e-9)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n][1])
