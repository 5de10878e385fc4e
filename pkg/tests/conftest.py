import pytest

from redeval.gateway.core import Gateway
from redeval.gateway.mock import MockBackend
from redeval.gateway.templates import TemplateRegistry
from redeval.gateway.types import PriceTable

# Results from tests/test_acceptance.py; printed as one line per criterion
# at the end of the run.
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def registry():
    return TemplateRegistry()


@pytest.fixture
def make_gateway(registry):
    """Factory for gateways over the seeded mock backend."""

    def _make(seed=42, embed_dim=16, prices=None, max_in_flight=8,
              transcript_path=None, backend=None):
        return Gateway(
            backend or MockBackend(seed=seed, embed_dim=embed_dim),
            prices=prices or PriceTable(),
            registry=registry,
            max_in_flight=max_in_flight,
            transcript_path=transcript_path,
        )

    return _make


@pytest.fixture
def gateway(make_gateway):
    return make_gateway()
