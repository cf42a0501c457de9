import pytest

from pmuplace.cases import load_wscc9
from pmuplace.gramian import GramianConfig, per_generator_bank
from pmuplace.network import init_steady_state, solve_power_flow


@pytest.fixture(scope="session")
def wscc():
    return load_wscc9()


@pytest.fixture(scope="session")
def wscc_pf(wscc):
    pf = solve_power_flow(wscc)
    assert pf.converged
    return pf


@pytest.fixture(scope="session")
def model_m1(wscc, wscc_pf):
    return init_steady_state(wscc, wscc_pf, "second")


@pytest.fixture(scope="session")
def model_m2(wscc, wscc_pf):
    return init_steady_state(wscc, wscc_pf, "fourth")


@pytest.fixture(scope="session")
def bank_m1(model_m1):
    return per_generator_bank(model_m1, GramianConfig())


@pytest.fixture(scope="session")
def bank_m2(model_m2):
    return per_generator_bank(model_m2, GramianConfig())
