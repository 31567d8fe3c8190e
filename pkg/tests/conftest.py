import pytest

from netpriv.model import Scenario, ScenarioConfig, build_population


@pytest.fixture
def small_cs():
    config = ScenarioConfig(n_users=10, rho=0.2, scenario=Scenario.P2PRIV_CS, seed=3)
    return config, build_population(config)


@pytest.fixture
def netpriv_pop():
    config = ScenarioConfig(n_users=50, n_exits=8, rho=0.1, rho_e=0.5,
                            scenario=Scenario.NETPRIV_CS, seed=11)
    return config, build_population(config)


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if not test_acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, ok, detail in sorted(test_acceptance.RESULTS):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {detail}")
