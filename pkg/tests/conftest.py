import pytest
from hypothesis import HealthCheck, settings

from tenderbroker import fixtures
from tenderbroker.matching import AttributeSpace, CapabilityMatrix, RequirementMatrix
from tenderbroker.model import parse_catalog, parse_description

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def partial():
    return parse_description(fixtures.read("sugarcrm-partial"))


@pytest.fixture
def full():
    return parse_description(fixtures.read("sugarcrm-full"))


@pytest.fixture
def dual_catalog():
    return parse_catalog(fixtures.read("catalog-dual-mode"))


@pytest.fixture
def vm_catalog():
    return parse_catalog(fixtures.read("catalog-vm-only"))


@pytest.fixture
def gpu_catalog():
    return parse_catalog(fixtures.read("catalog-gpu"))


@pytest.fixture
def example_space():
    import json

    return AttributeSpace.from_dict(json.loads(fixtures.read("example-space")))


@pytest.fixture
def example_capability():
    import json

    return CapabilityMatrix.from_dict(json.loads(fixtures.read("example-capability")))


@pytest.fixture
def example_requirement():
    import json

    return RequirementMatrix.from_dict(json.loads(fixtures.read("example-requirement")))


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s[7:9])):
            terminalreporter.write_line(line)
