import pytest

from emtsim.harness import initialize, load_scenario
from emtsim.netmodel import build_network, load_network
from emtsim.harness.scenario import data_dir


@pytest.fixture(scope="session")
def cigre_cfg():
    return load_network(data_dir() / "cigre_hv.json")


@pytest.fixture(scope="session")
def surrogate_init():
    return initialize(build_network(load_network(data_dir() / "surrogate_4bus.json")))


@pytest.fixture
def surrogate_scenario():
    return load_scenario("surrogate_flat")


ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Collects (passed, detail) per acceptance criterion for the summary."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
