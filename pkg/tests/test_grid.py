import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from indeflink.errors import AssemblyError, ConfigurationError, DimensionError
from indeflink.grid import (Field, GridSpec, PotentialSpec, WeightSpec, assemble_operator,
                            build_grid, covered_volume, evaluate_potential, evaluate_weight,
                            l2_inner, laplacian, unit_well_ground_energy)


def test_dirichlet_three_nodes():
    g = build_grid(GridSpec(1, 1.0, 3, "dirichlet"))
    np.testing.assert_allclose(g.axis, [-0.5, 0.0, 0.5])
    assert g.spacing == 0.5


def test_two_dimensional_count():
    g = build_grid(GridSpec(2, 1.0, 4, "dirichlet"))
    assert g.n_total == 16
    assert g.coords.shape == (16, 2)


def test_periodic_spacing_and_wrap():
    g = build_grid(GridSpec(1, np.pi, 4, "periodic"))
    assert g.spacing == pytest.approx(np.pi / 2)
    A = laplacian(g).toarray()
    assert A[0, 3] == A[3, 0] == pytest.approx(-1 / g.spacing**2)


@pytest.mark.parametrize("kw", [dict(dim=3), dict(n_per_axis=2), dict(half_width=0.0),
                                dict(boundary="neumann"), dict(n_per_axis=4.5)])
def test_invalid_grid_specs(kw):
    with pytest.raises(ConfigurationError):
        GridSpec(**kw)


def test_closed_form_laplacian_spectrum():
    n, L = 40, 3.0
    g = build_grid(GridSpec(1, L, n))
    op = assemble_operator(g, PotentialSpec("constant", {"value": 0.0}))
    lam = np.linalg.eigvalsh(op.dense())
    m = np.arange(1, n + 1)
    exact = 4 / g.spacing**2 * np.sin(m * np.pi / (2 * (n + 1))) ** 2
    np.testing.assert_allclose(lam, exact, rtol=1e-12)


def test_constant_potential_is_diagonal_shift():
    g = build_grid(GridSpec(2, 2.0, 6))
    A0 = assemble_operator(g, PotentialSpec("constant", {"value": 0.0})).dense()
    A1 = assemble_operator(g, PotentialSpec("constant", {"value": 1.7})).dense()
    np.testing.assert_allclose(A1 - A0, 1.7 * np.eye(g.n_total), rtol=0, atol=1e-12)


@pytest.mark.parametrize("dim,n,boundary", [(1, 33, "dirichlet"), (2, 9, "dirichlet"),
                                            (1, 32, "periodic"), (2, 8, "periodic")])
def test_matrix_exactly_symmetric(dim, n, boundary):
    L = np.pi if boundary == "periodic" else 4.0
    pot = (PotentialSpec("periodic_cosine", {"amplitude": 0.7}) if boundary == "periodic"
           else PotentialSpec("step_well", {"depth_ratio": 2.0}))
    M = assemble_operator(build_grid(GridSpec(dim, L, n, boundary)), pot).matrix
    assert abs(M - M.T).max() == 0.0


def test_stencil_pattern():
    g = build_grid(GridSpec(2, 1.0, 5))
    M = assemble_operator(g, PotentialSpec("constant", {"value": 0.0})).matrix
    nnz_per_row = np.diff(M.indptr)
    assert nnz_per_row.max() == 5 and nnz_per_row.min() == 3


def test_step_well_has_negative_eigenvalue():
    g = build_grid(GridSpec(1, 12.0, 256))
    op = assemble_operator(g, PotentialSpec("step_well", {"depth_ratio": 2.0, "R": 1.0}))
    assert np.linalg.eigvalsh(op.dense())[0] < 0


def test_step_well_shape():
    g = build_grid(GridSpec(1, 6.0, 101))
    pot = PotentialSpec("step_well", {"V0": 3.0, "R": 1.0, "V_inf": 2.0})
    V = evaluate_potential(g, pot)
    r = g.radius
    np.testing.assert_allclose(V[r <= 1.0], -3.0)
    np.testing.assert_allclose(V[r >= 2.0], 2.0)
    ramp = (r > 1.0) & (r < 2.0)
    order = np.argsort(r[ramp])
    assert np.all(np.diff(V[ramp][order]) >= -1e-12)


def test_discrete_unit_well_energy_tends_to_continuum():
    assert unit_well_ground_energy(1, 1e-3) == pytest.approx(np.pi**2 / 4, rel=1e-6)
    assert unit_well_ground_energy(1, 0.1) < np.pi**2 / 4


def test_bad_potentials():
    with pytest.raises(ConfigurationError):
        PotentialSpec("step_well", {"V0": -1.0})
    with pytest.raises(ConfigurationError):
        PotentialSpec("wiggle", {})
    g = build_grid(GridSpec(1, 1.0, 5))
    with pytest.raises(AssemblyError):
        assemble_operator(g, PotentialSpec("tabulated", {"values": [0, 1, np.nan, 1, 0]}))
    with pytest.raises(DimensionError):
        assemble_operator(g, PotentialSpec("tabulated", {"values": [0, 1]}))
    with pytest.raises(ConfigurationError):
        evaluate_potential(build_grid(GridSpec(1, 1.0, 8, "periodic")),
                           PotentialSpec("periodic_cosine", {}))


def test_weight_kinds_positive_and_hinf():
    g = build_grid(GridSpec(2, 3.0, 12))
    for kind, params in [("gaussian", {"amplitude": 2.0}), ("rational_decay", {"power": 3.0}),
                         ("constant_on_box", {"amplitude": 1.5, "half_side": 1.0})]:
        spec = WeightSpec(kind, params)
        h = evaluate_weight(g, spec)
        assert np.all(h > 0)
        assert spec.bind(g).h_inf == h.max()


def test_weight_center_moves_peak():
    g = build_grid(GridSpec(1, 4.0, 79))
    h = evaluate_weight(g, WeightSpec("gaussian", {"center": 1.0}))
    assert g.axis[np.argmax(h)] == pytest.approx(1.0)


def test_weight_q_exponent():
    assert WeightSpec("gaussian", p_exponent=4.0, critical_exponent=6.0).q_exponent == 3.0
    with pytest.raises(ConfigurationError):
        WeightSpec("gaussian", p_exponent=7.0)


def test_l2_inner_basics(rng):
    g = build_grid(GridSpec(1, 5.0, 200))
    assert l2_inner(g, np.zeros(200), np.zeros(200)) == 0.0
    one = np.ones(200)
    assert l2_inner(g, one, one) == pytest.approx(2 * 5.0, abs=2 * g.spacing)
    assert l2_inner(g, one, one) == pytest.approx(covered_volume(g.spec), rel=1e-12)
    u, v = rng.standard_normal((2, 200))
    assert l2_inner(g, u, v) == l2_inner(g, v, u)
    with pytest.raises(DimensionError):
        l2_inner(g, u, np.ones(10))


def test_weights_sum_to_volume_periodic():
    spec = GridSpec(2, np.pi, 16, "periodic")
    g = build_grid(spec)
    assert g.weights.sum() == pytest.approx((2 * np.pi) ** 2, rel=1e-12)
    assert np.all(g.weights > 0)


def test_field_validation(tmp_path):
    g = build_grid(GridSpec(1, 1.0, 4))
    with pytest.raises(DimensionError):
        Field(np.ones(3), g)
    with pytest.raises(DimensionError):
        Field(np.array([1.0, np.inf, 0.0, 0.0]), g)
    f = Field(np.array([1.0, -2.0, 0.5, 0.0]), g)
    assert f.sup_norm() == 2.0
    f.to_csv(tmp_path / "f.csv")
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "x,value" and len(lines) == 5


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_operator_linearity(a, b, seed):
    g = build_grid(GridSpec(1, 4.0, 50))
    op = assemble_operator(g, PotentialSpec("step_well", {"depth_ratio": 2.0}))
    u, v = np.random.default_rng(seed).standard_normal((2, 50))
    lhs = op.apply(a * u + b * v)
    rhs = a * op.apply(u) + b * op.apply(v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(rhs)))
