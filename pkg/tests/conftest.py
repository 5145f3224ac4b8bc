import numpy as np
import pytest

from dice_mpc.nlp import SolverOptions, solve
from dice_mpc.params import load_parameter_set
from dice_mpc.transcription import OcpSpec, build_ocp1

SCC_RHOS = (0.005, 0.015, 0.03)


@pytest.fixture(scope="session")
def p2016():
    return load_parameter_set("2016R")


@pytest.fixture(scope="session")
def p2013():
    return load_parameter_set("2013R")


@pytest.fixture(scope="session")
def opts():
    return SolverOptions()


def _solved(params, horizon, **spec_options):
    problem = build_ocp1(OcpSpec(params=params, horizon=horizon, **spec_options))
    return problem, solve(problem)


@pytest.fixture(scope="session")
def solved_n10(p2016):
    """DICE2016R, 10 steps, no options."""
    return _solved(p2016, 10)


@pytest.fixture(scope="session")
def solved_n20(p2016):
    return _solved(p2016, 20)


@pytest.fixture(scope="session")
def scc_by_rho_results(p2016):
    """rho -> (problem, result) for the 100-step runs with the first mitigation rate fixed."""
    return {rho: _solved(p2016, 100, fix_mu1=True, rho=rho) for rho in SCC_RHOS}


@pytest.fixture
def rng():
    return np.random.default_rng(0)
