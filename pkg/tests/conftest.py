import pytest

from choreochannel import cases
from choreochannel.harness import Trace, build_network


@pytest.fixture(scope="session")
def supply_machine():
    return cases.build_machine("supply_chain")


@pytest.fixture(scope="session")
def incident_machine():
    return cases.build_machine("incident_management")


@pytest.fixture(scope="session")
def supply_variants():
    return [Trace(tuple(v)) for v in cases.load_variants("supply_chain")]


@pytest.fixture(scope="session")
def incident_variants():
    return [Trace(tuple(v)) for v in cases.load_variants("incident_management")]


@pytest.fixture
def supply_setup(supply_machine):
    return build_network(supply_machine, seed=0, key_salt="supply_chain")
