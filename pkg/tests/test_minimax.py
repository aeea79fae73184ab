import numpy as np
import pytest

from indeflink.energy import EnergyModel, QuadraticModel
from indeflink.errors import ParameterError
from indeflink.linking import LinkingFrame
from indeflink.minimax import (SolverOptions, descend, fiber_maximize, fit_order, initialize,
                               lambda_constraint, locate_maximizer, refine_newton,
                               spectral_content)
from indeflink.nonlinearity import NonlinearitySpec


@pytest.fixture(scope="module")
def toy():
    return LinkingFrame.for_subspaces(3, 3, 1.0, 2.0, 3.0, alpha=0.25)


@pytest.fixture(scope="module")
def free(small):
    return EnergyModel(small.op, small.split, small.h_values, NonlinearitySpec.zero())


def _frame_for(model, r1=1.0):
    e = np.zeros(model.dim)
    e[model.split.pos_idx[0]] = 1.0
    return LinkingFrame(e, model.e1.copy(), 0.5 * r1, r1, 2 * r1, 0.05)


def test_initial_value_without_nonlinearity(free):
    fr = _frame_for(free, 1.5)
    state = initialize(free, fr)
    assert state.c == pytest.approx(0.5 * fr.r1**2, rel=1e-12)


def test_maximizer_matches_quadratic(toy):
    b = np.array([0.1, 0.0, 0.0, 0.3, -0.2, 0.0])
    q = QuadraticModel(3, 3, b)
    state = initialize(q, toy)
    z, val = locate_maximizer(state, q, toy)
    expect = 0.5 * toy.r1**2 + b[0] * toy.r1 + 0.5 * np.sum(b[3:] ** 2)
    assert val == pytest.approx(expect, rel=1e-12)
    np.testing.assert_allclose(z[3:], b[3:], atol=1e-9)
    assert z[0] == pytest.approx(toy.r1)


def test_more_starts_never_lower(small):
    fr = _frame_for(small, 2.0)
    state = initialize(small, fr, 1)
    vals = [locate_maximizer(state, small, fr, n_starts=k, seed=4)[1] for k in (1, 3, 8)]
    assert vals[0] <= vals[1] + 1e-12 and vals[1] <= vals[2] + 1e-12


def test_fiber_maximize_respects_box(toy):
    q = QuadraticModel(3, 3, np.zeros(6))
    res = fiber_maximize(q, toy, toy.e, np.array([0.3, 5.0, 0.0, 0.0]))
    assert 0 <= res.p[0] <= toy.r1 and np.linalg.norm(res.p[1:]) <= toy.r2 + 1e-12
    assert res.value == pytest.approx(0.5 * toy.r1**2)


def test_shrink_validation(toy):
    q = QuadraticModel(3, 3, np.zeros(6))
    state = initialize(q, toy)
    with pytest.raises(ParameterError):
        descend(state, q, toy, shrink=0.0)
    with pytest.raises(ParameterError):
        SolverOptions(shrink=1.0)
    with pytest.raises(ParameterError):
        SolverOptions(tol=0.0)


def test_lambda_constraint_identity(toy):
    q = QuadraticModel(3, 3, np.zeros(6))
    # the outer faces of the box carry I ≤ ½r₁²
    assert lambda_constraint(q, toy, toy.e) <= 0.5 * toy.r1**2 + 1e-12


def test_fit_order():
    assert fit_order([1e-2, 1e-4, 1e-8]) == pytest.approx(2.0)
    assert fit_order([1e-1, 1e-2, 1e-3]) == pytest.approx(1.0)
    assert fit_order([1.0, 2.0]) is None
    assert fit_order([1.0, 2.0, 0.5]) is None


def test_newton_leaves_critical_point_alone(free):
    u0 = np.zeros(free.grid.n_total)
    res = refine_newton(free, u0)
    assert res.converged and res.corrections == [] and res.residual == 0.0
    np.testing.assert_array_equal(res.u.values, u0)


def test_spectral_content(small):
    z = np.zeros(small.dim)
    z[small.split.neg_idx[0]] = 1.0
    z[small.split.pos_idx[:2]] = 0.5
    assert spectral_content(small, z) == {"minus": 1, "plus": 2}
    z[small.split.pos_idx[5]] = 1e-9
    assert spectral_content(small, z)["plus"] == 2


def test_t1_solution_properties(t1_solution):
    rep = t1_solution
    assert rep.converged and rep.cerami <= 1e-8
    assert rep.c_history[0] >= rep.alpha
    assert rep.c_est >= rep.alpha
    assert rep.decrease_fraction >= 0.9 and rep.tail_monotone
    assert not rep.unbounded_flag and rep.lambda_ok
    assert rep.newton_refined and rep.newton.residual <= 1e-12
    s = rep.summary()
    assert s["stages"] == rep.stages == len(rep.stage_records)


def test_initialize_deterministic(t1_problem, t1_frame):
    a = initialize(t1_problem.model, t1_frame, seed=0)
    b = initialize(t1_problem.model, t1_frame, seed=0)
    assert a.c == b.c
    np.testing.assert_array_equal(a.best_point, b.best_point)
