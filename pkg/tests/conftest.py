import numpy as np
import pytest

from psarp import solver


def pytest_configure(config):
    config.addinivalue_line("markers", "no_ledger_check: solves here may break ledger laws on purpose")
    config.addinivalue_line("markers", "slow: longer-running end-to-end test")


@pytest.fixture(autouse=True)
def ledger_laws(request):
    """Every solve made by a test must satisfy the ledger laws."""
    reports = []
    solver.add_observer(reports.append)
    yield reports
    solver.remove_observer(reports.append)
    if request.node.get_closest_marker("no_ledger_check"):
        return
    bad = [m for rep in reports for m in rep.ledger.violations()]
    assert not bad, f"ledger violations: {bad[:5]}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
