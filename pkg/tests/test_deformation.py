import math

import numpy as np
import pytest

from indeflink.deformation import (DeformationParams, apply_U, build_chi, check_property_i,
                                   check_property_ii, classify_cases, eta_iterate, eta_step,
                                   invert_U, k_lower_bound, s_count_for, select_params,
                                   split_UK, vector_field, write_trace)
from indeflink.energy import EnergyModel, QuadraticModel, sample_ball
from indeflink.errors import InvarianceViolation, ParameterError
from indeflink.nonlinearity import NonlinearitySpec


@pytest.fixture(scope="module")
def quad():
    b = np.zeros(8)
    b[0], b[4] = -6.0, 2.0
    return QuadraticModel(4, 4, b)


@pytest.fixture(scope="module")
def qparams(quad):
    return select_params(quad, 2.0, rho_gain=0.05, epsilon=0.05)


@pytest.fixture(scope="module")
def sparams(small):
    return select_params(small, 1.0, rho_gain=0.05, epsilon=0.099, n_probe=32, n_grad=64)


def test_chi_properties():
    R = 3.0
    chi = build_chi(R)
    assert chi(R + 1) == 1.0 and chi(R + 2) == 0.0
    assert chi(R + 1.75) <= 1 / 16
    assert math.isfinite(chi.max_slope) and chi.max_slope > 0
    t = np.linspace(R + 1.01, R + 1.99, 200)
    assert np.all(chi.derivative(t) < 0)
    with pytest.raises(ValueError):
        build_chi(0.0)


def test_s_count_rounds_up():
    assert s_count_for(2.0) == 16
    assert s_count_for(1.5) == 13


def test_k_bound_monotone_in_M():
    lo = k_lower_bound(10.0, 0.1, 2.0, 3.0, 2.0)
    hi = k_lower_bound(20.0, 0.1, 2.0, 3.0, 2.0)
    assert hi >= 2 * 10.0 * 2 / 0.1 and hi >= lo


def test_params_relations(qparams):
    p = qparams
    assert p.eps_bar <= p.rho_gain / (p.M * p.s_count) + 1e-18
    assert p.eps_bar <= p.epsilon / (2 * p.M * p.s_count) + 1e-18
    assert 1 / p.k < p.delta / (2 * p.M)
    assert 1 / p.k < 1 / (8 * (p.R + 2) * (1 + p.chi.max_slope * p.L_sum))
    assert p.k & (p.k - 1) == 0


def test_params_validation(quad):
    with pytest.raises(ParameterError):
        select_params(quad, 2.0, rho_gain=0.05, epsilon=0.2)
    with pytest.raises(ParameterError):
        select_params(quad, 2.0, rho_gain=0.0, epsilon=0.05)


def test_eta_zero_time_and_far_states(quad, qparams, rng):
    z = sample_ball(quad, 4.0, 1, rng)[:, 0]
    np.testing.assert_array_equal(eta_step(quad, qparams, 0.0, z), z)
    far = z.copy()
    far[quad.e1] *= (qparams.R + 3) / np.linalg.norm(far[quad.e1])
    far[quad.e2] *= (qparams.R + 3) / np.linalg.norm(far[quad.e2])
    np.testing.assert_array_equal(eta_step(quad, qparams, 1.0, far), far)
    with pytest.raises(ValueError):
        eta_step(quad, qparams, 1.5, z)


def test_step_length_bounded(small, sparams, rng):
    Z = sample_ball(small, sparams.R + 2, 100, rng)
    step = np.linalg.norm(eta_step(small, sparams, 1.0, Z) - Z, axis=0)
    assert np.all(step <= sparams.M / sparams.k)
    assert sparams.M / sparams.k < sparams.delta


def test_descent_direction(small, sparams, rng):
    Z = sample_ball(small, sparams.R + 2, 100, rng)
    V = vector_field(small, sparams, Z)
    assert np.all(np.sum(small.gradient(Z) * V, axis=0) >= 0)


def test_critical_point_fixed():
    # a model whose critical point lies inside the ball
    q = QuadraticModel(4, 4, np.full(8, 0.1))
    p = select_params(q, 2.0, rho_gain=0.05, epsilon=0.05)
    zs = q.critical_point
    np.testing.assert_allclose(eta_iterate(q, p, 1.0, zs), zs, atol=1e-15)


def test_per_step_energy_bound(small, sparams, rng):
    Z = sample_ball(small, sparams.R + 2, 100, rng)
    gain = small.energy(eta_step(small, sparams, 1.0, Z)) - small.energy(Z)
    assert np.all(gain <= sparams.rho_gain / sparams.n_steps + 1e-10)


def test_property_i_quadratic(quad, qparams, rng):
    z0 = sample_ball(quad, qparams.R + 2, 40, rng)
    rep = check_property_i(quad, qparams, z0)
    assert rep.holds and rep.max_component_norm <= qparams.R + 2 + 1e-8
    assert rep.per_t_max_gain[0.0] == 0.0


def test_invariance_violation_raised(quad, qparams):
    bad = DeformationParams(**{**qparams.__dict__, "k": 1})
    z = np.zeros(8)
    z[0] = qparams.R + 1.9
    with pytest.raises(InvarianceViolation):
        eta_iterate(quad, bad, 1.0, z)


def test_property_ii_quadratic(quad, qparams):
    rng = np.random.default_rng(2)
    c = float(np.median(quad.energy(sample_ball(quad, qparams.R / 2, 2000, rng))))
    rep = check_property_ii(quad, qparams, c, n_starts=20, seed=4)
    assert rep.premise_holds and rep.conclusion_holds and rep.implication_holds
    assert set(rep.case_labels) <= {"I", "II", "III"}


def test_split_UK(small, sparams, rng):
    z = sample_ball(small, sparams.R + 2, 1, rng)[:, 0]
    U, K = split_UK(small, sparams, 0.7, z)
    np.testing.assert_allclose(U + K, eta_step(small, sparams, 0.7, z), atol=1e-12)
    U0, K0 = split_UK(small, sparams, 0.0, z)
    np.testing.assert_array_equal(U0, z)
    assert np.all(K0 == 0)
    Up = apply_U(small, sparams, 0.7, np.where(small.e1, z, 0.0))
    assert np.all(Up[small.e2] == 0)
    free = EnergyModel(small.op, small.split, small.h_values, NonlinearitySpec.zero())
    assert np.all(split_UK(free, sparams, 0.7, z)[1] == 0)


def test_invert_U(small, sparams, rng):
    w = sample_ball(small, sparams.R + 2, 1, rng)[:, 0]
    np.testing.assert_array_equal(invert_U(small, sparams, 0.0, w), w)
    v, info = invert_U(small, sparams, 0.8, w, info=True)
    assert np.linalg.norm(apply_U(small, sparams, 0.8, v) - w) <= 1e-10
    assert info.max_ratio <= 0.5
    with pytest.raises(ValueError):
        invert_U(small, sparams, 0.8, np.zeros((small.dim, 2)))


def test_field_arguments_round_trip(small, sparams, rng):
    z = sample_ball(small, 1.0, 1, rng)[:, 0]
    out = eta_step(small, sparams, 0.5, small.field(z))
    np.testing.assert_allclose(small.to_coords(out.values), eta_step(small, sparams, 0.5, z),
                               atol=1e-12)


def test_trace_csv(quad, qparams, tmp_path, rng):
    z = sample_ball(quad, 1.0, 2, rng)
    _, rec = eta_iterate(quad, qparams, 1.0, z, n_steps=3, record=True)
    labels = classify_cases(rec, 0.0, 10.0, qparams.R)
    write_trace(tmp_path / "t.csv", rec, labels)
    rows = (tmp_path / "t.csv").read_text().splitlines()
    assert rows[0] == "stage,trajectory,j,I,V_norm,case_label" and len(rows) == 1 + 2 * 4
