import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from qfhe.dualenc import dual_keygen
from qfhe.params import Params, get_params
from qfhe.qhe import qhe_keygen

settings.register_profile("repo", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("repo")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def desk():
    return get_params("desk")


@pytest.fixture(scope="session")
def nano():
    return get_params("nano")


@pytest.fixture(scope="session")
def nano_plus():
    return get_params("nano-plus")


@pytest.fixture(scope="session")
def small():
    """Fast custom set: q = 2^16, one secret word, room for real noise."""
    return Params(q=1 << 16, n=1, m=20, beta_init=2, L=1, eta=1, eta_c=1, name="small")


@pytest.fixture(scope="session")
def desk_keys(desk):
    return dual_keygen(desk, np.random.default_rng(1001))


@pytest.fixture(scope="session")
def nano_keys(nano):
    return dual_keygen(nano, np.random.default_rng(1002))


@pytest.fixture(scope="session")
def small_keys(small):
    return dual_keygen(small, np.random.default_rng(1003))


@pytest.fixture(scope="session")
def desk_chain(desk):
    """Two-level chain at desk, oracle attached."""
    return qhe_keygen(desk, 2, np.random.default_rng(1004))
