"""Acceptance criteria 1–13, each checked against its stated tolerance.

Every test stores a one-line verdict in ``conftest.ACCEPTANCE``; the lines
are printed in the terminal summary under "acceptance criteria".
"""
import time

import numpy as np
import pytest
import scipy.linalg

from indeflink.cli import build_problem, main, make_frame
from indeflink.config import preset, with_overrides
from indeflink.deformation import (apply_U, check_property_i, check_property_ii, invert_U,
                                   select_params)
from indeflink.energy import QuadraticModel, sample_ball
from indeflink.grid import (GridSpec, PotentialSpec, assemble_operator, build_grid,
                            unit_well_ground_energy)
from indeflink.linking import (LinkingFrame, SigmaHomotopy, identity_homotopy, verify_geometry,
                               verify_link_smallcase)
from indeflink.minimax import SolverOptions, solve, spectral_content
from indeflink.oracles import shooting_oracle_1d
from indeflink.spectral import compute_a0, eigendecompose

from conftest import ACCEPTANCE


def record(num, ok, detail):
    ACCEPTANCE[num] = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(ACCEPTANCE[num])


def _smoothstep(y):
    y = np.clip(y, 0.0, 1.0)
    return y**3 * (10 - 15 * y + 6 * y * y)


# ---------------------------------------------------------------------------

def test_c01_closed_form_spectrum():
    t0 = time.perf_counter()
    n, L = 128, 12.0
    g = build_grid(GridSpec(1, L, n, "dirichlet"))
    split = eigendecompose(assemble_operator(g, PotentialSpec("constant", {"value": 0.0})))
    elapsed = time.perf_counter() - t0
    m = np.arange(1, n + 1)
    exact = 4 / g.spacing**2 * np.sin(m * np.pi / (2 * (n + 1))) ** 2
    rel = float(np.max(np.abs(split.eigenvalues - exact) / exact))
    ok = rel <= 1e-12 and elapsed < 1.0
    record(1, ok, f"max rel error {rel:.2e} (≤ 1e-12), {elapsed:.3f} s (< 1 s)")
    assert ok


def test_c02_step_well_sign_structure():
    t0 = time.perf_counter()
    n, L, R = 256, 12.0, 1.0
    g = build_grid(GridSpec(1, L, n, "dirichlet"))
    pot = PotentialSpec("step_well", {"depth_ratio": 2.0, "R": R, "V_inf": 1.0})
    split = eigendecompose(assemble_operator(g, pot))
    elapsed = time.perf_counter() - t0
    # independent dense oracle from the closed-form stencil
    h = 2 * L / (n + 1)
    x = -L + h * np.arange(1, n + 1)
    v0 = 2.0 * unit_well_ground_energy(1, h) / R**2
    assert v0 == pytest.approx(2 * 4 / h**2 * np.sin(np.pi * h / 4) ** 2, rel=1e-14)
    V = -v0 + (1.0 + v0) * _smoothstep((np.abs(x) - R) / R)
    M = (np.diag(2 / h**2 + V) - np.diag(np.ones(n - 1), 1) / h**2
         - np.diag(np.ones(n - 1), -1) / h**2)
    lam = np.linalg.eigvalsh(M)
    gap = float(np.max(np.abs(lam - split.eigenvalues)) / np.max(np.abs(lam)))
    n_neg = int(np.sum(lam < 0))
    sigma_plus = float(lam[lam > 0].min())
    ok = (n_neg >= 1 and split.neg_idx.size == n_neg and sigma_plus > 0
          and split.sigma_plus == pytest.approx(sigma_plus, rel=1e-10) and gap <= 1e-12
          and elapsed < 5.0)
    record(2, ok, f"dim E- = {n_neg}, sigma+ = {sigma_plus:.6g} > 0, oracle gap {gap:.1e}, "
                  f"{elapsed:.2f} s (< 5 s)")
    assert ok


def test_c03_threshold_a0(t1_problem):
    split = t1_problem.split
    h = t1_problem.model.h_values
    th = t1_problem.threshold
    lower_ok = th.a0 >= split.sigma_plus / h.max() - 1e-10
    unit = compute_a0(split, np.ones(split.grid.n_total))
    unit_gap = abs(unit.a0 - split.sigma_plus)
    # oracle 1: generalized symmetric eigensolve in E₁ coordinates; the weighted
    # Gram matrix is nearly singular where h decays, so 1/a₀ is taken as the top
    # eigenvalue of the pencil (G, diag λ)
    P = split.eigenvectors[:, split.pos_idx]
    lam = split.eigenvalues[split.pos_idx]
    G = P.T @ ((split.grid.weights * h)[:, None] * P)
    gen = 1.0 / float(scipy.linalg.eigh(G, np.diag(lam), eigvals_only=True)[-1])
    # oracle 2: Rayleigh quotients of 10⁴ vectors, half random and half small
    # perturbations (in the normalized coordinates √λ c) of the attaining vector
    rng = np.random.default_rng(7)
    c_star = split.coefficients(th.attaining_vector)[split.pos_idx]
    near = c_star[:, None] + 1e-6 * rng.standard_normal((lam.size, 5000)) / np.sqrt(lam)[:, None]
    C = np.concatenate([rng.standard_normal((lam.size, 5000)), near], axis=1)
    q = np.sum(lam[:, None] * C * C, axis=0) / np.sum(C * (G @ C), axis=0)
    ray = float(q.min())
    ray_gap = abs(ray - th.a0)
    ok = (lower_ok and unit_gap <= 1e-10 and abs(gen - th.a0) <= 1e-6 and ray_gap <= 1e-6
          and ray >= th.a0 - 1e-10)
    record(3, ok, f"a0 = {th.a0:.10g} ≥ sigma+/h_inf = {split.sigma_plus / h.max():.6g}; "
                  f"h≡1 gap {unit_gap:.1e}; eigensolve gap {abs(gen - th.a0):.1e}; "
                  f"Rayleigh gap {ray_gap:.1e} (≤ 1e-6)")
    assert ok


def test_c04_gradient_fidelity(t1_problem):
    t0 = time.perf_counter()
    model = t1_problem.model
    rng = np.random.default_rng(4)
    eps = np.logspace(-6, -2, 9)
    U = sample_ball(model, 2.0, 50, rng)
    slopes = []
    for j in range(50):
        u = U[:, j]
        v = rng.standard_normal(model.dim)
        v /= np.linalg.norm(v)
        E0, g = model.energy(u), model.gradient(u)
        err = np.array([abs(model.energy(u + e * v) - E0 - e * (g @ v)) for e in eps])
        slopes.append(np.polyfit(np.log(eps), np.log(err), 1)[0])
    elapsed = time.perf_counter() - t0
    worst = float(min(slopes))
    ok = worst >= 1.9 and elapsed < 10.0
    record(4, ok, f"min log-log slope {worst:.3f} over 50 pairs (≥ 1.9), {elapsed:.2f} s (< 10 s)")
    assert ok


@pytest.mark.slow
def test_c05_energy_gain_bound():
    problem = build_problem(with_overrides(preset("t1"), n=128))
    model = problem.model
    params = select_params(model, 1.0, rho_gain=0.05, epsilon=0.099)
    z0 = sample_ball(model, params.R + 2, 100, np.random.default_rng(5))
    # eta_iterate raises InvarianceViolation if an intermediate iterate leaves the ball
    rep = check_property_i(model, params, z0)
    ok = rep.holds and rep.max_component_norm <= params.R + 2 + 1e-10
    record(5, ok, f"max excess over rho = {rep.max_excess:.2e} (≤ 1e-10) with k = {params.k}, "
                  f"s = {params.s_count}; max component norm {rep.max_component_norm:.4f} "
                  f"≤ R + 2 = {params.R + 2:g}")
    assert ok


@pytest.fixture(scope="module")
def quad20():
    b = np.zeros(20)
    b[0], b[10] = -8.0, 3.0     # critical point far outside B_{R+1}
    model = QuadraticModel(10, 10, b)
    return model, select_params(model, 2.0, rho_gain=0.05, epsilon=0.05)


def test_c06_energy_drop_implication(quad20):
    model, params = quad20
    rng = np.random.default_rng(0)
    c = float(np.median(model.energy(sample_ball(model, params.R / 2, 4000, rng))))
    rep = check_property_ii(model, params, c, n_starts=50, seed=1)
    ok = rep.premise_holds and rep.conclusion_holds and rep.implication_holds
    top = float(np.max(rep.final_energies))
    record(6, ok, f"premise min measure {rep.premise_min_cerami:.3g} ≥ "
                  f"{rep.premise_threshold:.3g}; max final I − (c − eps/2) = "
                  f"{top - (c - params.epsilon / 2):.3e} ≤ 0 on 50 starts")
    assert ok


def test_c07_contraction_inversion(quad20):
    model, params = quad20
    rng = np.random.default_rng(3)
    W = sample_ball(model, params.R + 2, 1000, rng)
    ts = rng.uniform(size=1000)
    trip = max(float(np.linalg.norm(apply_U(model, params, t, invert_U(model, params, t, w)) - w))
               for t, w in zip(ts, W.T))
    A = sample_ball(model, params.R + 2, 1000, rng)
    B = sample_ball(model, params.R + 2, 1000, rng)
    ratios = [np.linalg.norm(apply_U(model, params, t, a) - apply_U(model, params, t, b))
              / np.linalg.norm(a - b) for t, a, b in zip(ts, A.T, B.T)]
    low = float(min(ratios))
    ok = trip <= 1e-10 and low >= 0.5
    record(7, ok, f"round trip {trip:.1e} (≤ 1e-10); min ‖U u − U v‖/‖u − v‖ = {low:.4f} "
                  f"(≥ 0.5) on 10³ pairs")
    assert ok


def test_c08_linking_geometry(t1_problem, t1_frame, t2_problem, t2_frame):
    r1 = verify_geometry(t1_problem.model, t1_frame, n=1000, seed=11)
    r2 = verify_geometry(t2_problem.model, t2_frame, n=1000, seed=12)
    ok = r1.holds and r2.holds and t1_frame.variant == "box" and t2_frame.variant == "ball"
    fmt = lambda r: (f"min_S {r.min_S:.4g} ≥ alpha {r.alpha:.4g} > 0 ≥ "
                     f"max faces {max(r.face_max.values()):.3g}")
    record(8, ok, f"t1 box: {fmt(r1)}; t2 ball: {fmt(r2)}")
    assert ok


def _homotopies():
    b = np.array([[1.0], [0.0], [0.0]])
    none = lambda t, z: np.zeros((3, z.shape[1]))

    def rotate(t, z):
        a = 0.5 * np.pi * t
        out = z[:3].copy()
        out[0] = np.cos(a) * z[0] - np.sin(a) * z[1]
        out[1] = np.sin(a) * z[0] + np.cos(a) * z[1]
        return out

    def coupled(t, z):
        out = z[:3].copy()
        out[1] += 0.2 * t * np.tanh(z[3])
        return out

    return [identity_homotopy(3, 3),
            SigmaHomotopy("compact_shift", lambda t, z: z[:3].copy(),
                          lambda t, z: 0.3 * t * np.tile(b, (1, z.shape[1])), b),
            SigmaHomotopy("e1_rotation", rotate, none, np.zeros((3, 0))),
            SigmaHomotopy("e1_scaling", lambda t, z: (1 + 0.25 * np.sin(2 * np.pi * t)) * z[:3],
                          none, np.zeros((3, 0))),
            SigmaHomotopy("coupled", coupled, lambda t, z: 0.3 * t * np.sin(z[0])[None, :] * b, b)]


def test_c09_link_verifier():
    t0 = time.perf_counter()
    frame = LinkingFrame.for_subspaces(3, 3, 1.0, 2.0, 3.0)
    reports = [verify_link_smallcase(frame, hom, n_grid=21) for hom in _homotopies()]
    elapsed = time.perf_counter() - t0
    ok = all(r.all_witnessed for r in reports) and elapsed < 30.0
    worst = max(s.residual for r in reports for s in r.steps)
    record(9, ok, f"{sum(r.all_witnessed for r in reports)}/5 homotopies witnessed at all 21 t; "
                  f"max residual {worst:.1e}; {elapsed:.2f} s (< 30 s)")
    assert ok


@pytest.fixture(scope="module")
def timed_t1():
    t0 = time.perf_counter()
    problem = build_problem(preset("t1"))
    frame = make_frame(problem)
    rep = solve(problem.model, frame, SolverOptions())
    return problem, rep, time.perf_counter() - t0


def test_c10_t1_solve(timed_t1):
    problem, rep, elapsed = timed_t1
    order = rep.newton.order if rep.newton is not None else None
    ok = (rep.converged and rep.cerami <= 1e-8 and rep.c_est >= rep.alpha - 1e-6
          and rep.alpha - 1e-6 > 0 and rep.newton_refined and rep.newton.residual <= 1e-12
          and order is not None and order >= 1.8 and elapsed < 120.0)
    record(10, ok, f"measure {rep.cerami:.2e} (≤ 1e-8); I(u*) = {rep.c_est:.6g} ≥ alpha − 1e-6 "
                   f"= {rep.alpha - 1e-6:.4g}; Newton ‖I′‖ = "
                   f"{rep.newton.residual if rep.newton else float('nan'):.1e}, order "
                   f"{order if order is not None else float('nan'):.3f} (≥ 1.8); "
                   f"{elapsed:.1f} s (< 120 s)")
    assert ok


def test_c11_shooting_cross_check(timed_t1):
    problem, rep, _ = timed_t1
    shots = shooting_oracle_1d(problem.model)
    cand, dist = shots.closest(rep.u_star)
    ok = dist <= 1e-3
    record(11, ok, f"relative L2 distance to the shooting solution (u(0) = "
                   f"{cand.amplitude:.6g}) {dist:.2e} (≤ 1e-3)")
    assert ok


def test_c12_t2_solve():
    t0 = time.perf_counter()
    problem = build_problem(preset("t2_periodic"))
    frame = make_frame(problem)
    rep = solve(problem.model, frame, SolverOptions())
    elapsed = time.perf_counter() - t0
    dims = problem.split.dims
    content = spectral_content(problem.model, rep.z_star)
    order = rep.newton.order if rep.newton is not None else None
    ok = (dims["minus"] >= 3 and dims["plus"] >= 3 and rep.converged and rep.cerami <= 1e-8
          and rep.c_est >= rep.alpha - 1e-6 and rep.alpha - 1e-6 > 0 and rep.newton_refined
          and rep.newton.residual <= 1e-12 and order is not None and order >= 1.8
          and elapsed < 300.0)
    record(12, ok, f"dim E- = {dims['minus']}, dim E+ = {dims['plus']}; u* uses "
                   f"{content['minus']} negative / {content['plus']} positive modes; measure "
                   f"{rep.cerami:.2e}; Newton ‖I′‖ = "
                   f"{rep.newton.residual if rep.newton else float('nan'):.1e}, order "
                   f"{order if order is not None else float('nan'):.3f}; {elapsed:.1f} s (< 300 s)")
    assert ok


@pytest.mark.parametrize("scenario", ["t1", "t2_periodic"])
def test_c13_determinism(tmp_path, scenario):
    names = ("solution.csv", "residual_history.csv", "stages.csv")
    outs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["--scenario", scenario, "--seed", "3", "--emit-trace", "--out",
                     str(out)]) == 0
        outs.append([(out / n).read_bytes() for n in names])
    same = outs[0] == outs[1]
    prev = ACCEPTANCE.get(13, "")
    ok = same and "FAIL" not in prev
    done = prev.split("  ", 1)[1] + "; " if prev else ""
    record(13, ok, f"{done}{scenario}: {len(names)} CSV artifacts byte-identical = {same}")
    assert same
