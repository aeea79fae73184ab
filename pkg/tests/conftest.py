import numpy as np
import pytest

from indeflink.cli import build_problem, make_frame
from indeflink.config import preset
from indeflink.energy import EnergyModel
from indeflink.grid import (GridSpec, PotentialSpec, WeightSpec, assemble_operator, build_grid,
                            evaluate_weight)
from indeflink.minimax import SolverOptions, solve
from indeflink.nonlinearity import NonlinearitySpec
from indeflink.spectral import eigendecompose

# acceptance lines collected by tests/test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[num])


def small_model(n=64, L=8.0, potential=None, weight=None, nonlinearity=None,
                boundary="dirichlet"):
    """A cheap 1D energy model for unit tests."""
    g = build_grid(GridSpec(1, L, n, boundary))
    pot = potential or PotentialSpec("step_well", {"depth_ratio": 2.0, "R": 1.0, "V_inf": 1.0})
    op = assemble_operator(g, pot)
    split = eigendecompose(op)
    h = evaluate_weight(g, weight or WeightSpec("gaussian", {"amplitude": 2.0, "width": 1.0}))
    return EnergyModel(op, split, h, nonlinearity or NonlinearitySpec.example())


@pytest.fixture(scope="session")
def small():
    return small_model()


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def t1_problem():
    return build_problem(preset("t1"))


@pytest.fixture(scope="session")
def t1_frame(t1_problem):
    return make_frame(t1_problem)


@pytest.fixture(scope="session")
def t1_solution(t1_problem, t1_frame):
    return solve(t1_problem.model, t1_frame, SolverOptions())


@pytest.fixture(scope="session")
def t2_problem():
    return build_problem(preset("t2_periodic"))


@pytest.fixture(scope="session")
def t2_frame(t2_problem):
    return make_frame(t2_problem)


@pytest.fixture(scope="session")
def t2_solution(t2_problem, t2_frame):
    return solve(t2_problem.model, t2_frame, SolverOptions())
