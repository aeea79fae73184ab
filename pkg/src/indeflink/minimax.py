"""Minimax descent: c = inf over admissible deformations of sup_Q̄ I∘h.

The admissible maps used here are rotations of E₁ that fix E₂ and carry e
to a unit vector w.  Each rotation has the form (invertible part, zero
compact part) and commutes with both projectors, so any finite composite is
admissible; the image of Q̄ is the fiber {r w + y : (r, y) ∈ Q̄}.  A stage
takes the maximizer z* on the current fiber, steps it against the gradient
(z* − τ I′(z*), with τ = 1/k a power of two chosen by an Armijo test) and
rotates w toward the E₁ part of the result.

Convergence is judged by the Cerami measure (1 + ‖z‖)‖I′(z)‖ at the fiber
maximizer; an independent Newton iteration on the nodal equations then
certifies the critical point.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy.sparse.linalg import spsolve

from .deformation import DeformationParams, build_chi
from .energy import CeramiDiagnostics, EnergyModel, SplitFunctional
from .errors import (DescentAnomaly, InitializationError, MaximizerError, ParameterError,
                     RefinementError)
from .grid import Field
from .linking import LinkingFrame, _e2_directions
from .precise import DPS, PreciseSystem

@dataclass
class SolverOptions:
    tol: float = 1e-8
    max_stages: int = 200
    n_starts: int = 8
    seed: int = 0
    shrink: float = 0.5
    armijo: float = 1e-4
    max_halvings: int = 12
    newton_tol: float = 1e-12
    newton_start: float = 1e-2     # Newton starts at the first iterate below this measure
    newton: bool = True
    norm_growth_flag: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.shrink < 1.0:
            raise ParameterError("shrink must lie in (0, 1)")
        if self.tol <= 0 or self.max_stages < 0 or self.n_starts < 1:
            raise ParameterError("tol > 0, max_stages ≥ 0 and n_starts ≥ 1 are required")


# ---------------------------------------------------------------------------
# maximization over a fiber {r w + y}

def _fiber_basis(frame: LinkingFrame, w: np.ndarray) -> np.ndarray:
    idx2 = frame.e2_index
    P = np.zeros((w.size, 1 + idx2.size))
    P[:, 0] = w
    P[idx2, 1 + np.arange(idx2.size)] = 1.0
    return P


def _project(frame: LinkingFrame, p: np.ndarray) -> np.ndarray:
    p = p.copy()
    if frame.variant == "box":
        p[0] = min(max(p[0], 0.0), frame.r1)
        ny = np.linalg.norm(p[1:])
        if ny > frame.r2:
            p[1:] *= frame.r2 / ny
    else:
        p[0] = max(p[0], 0.0)
        n = np.linalg.norm(p)
        if n > frame.r1:
            p *= frame.r1 / n
    return p


@dataclass
class FiberMax:
    p: np.ndarray
    z: np.ndarray
    value: float
    proj_grad: float
    iterations: int


def fiber_maximize(model: SplitFunctional, frame: LinkingFrame, w: np.ndarray, p0,
                   max_iter: int = 100, tol: float = 1e-15) -> FiberMax:
    """Projected Newton ascent of p ↦ I(P p) over the Q̄ parameters."""
    P = _fiber_basis(frame, w)
    p = _project(frame, np.asarray(p0, dtype=float))
    z = P @ p
    E, g = model.energy_and_gradient(z)
    gp = P.T @ g
    pg = np.linalg.norm(_project(frame, p + gp) - p)
    it = 0
    for it in range(1, max_iter + 1):
        if not np.isfinite(E):
            raise MaximizerError("non-finite energy during fiber ascent")
        if pg <= tol * (1.0 + np.linalg.norm(p)):
            break
        H = model.restricted_hessian(z, P)
        ev = np.linalg.eigvalsh(H)
        if ev[-1] < 0:
            step = -np.linalg.solve(H, gp)
        else:
            step = gp / (1.0 + np.max(np.abs(ev)))
        accepted = False
        for _ in range(40):
            pt = _project(frame, p + step)
            zt = P @ pt
            Et, gt = model.energy_and_gradient(zt)
            gpt = P.T @ gt
            pgt = np.linalg.norm(_project(frame, pt + gpt) - pt)
            if Et > E or (Et >= E - 1e-14 * (1.0 + abs(E)) and pgt < pg):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        p, z, E, gp, pg = pt, zt, Et, gpt, pgt
    return FiberMax(p, z, float(E), float(pg), it)


# ---------------------------------------------------------------------------
# state

@dataclass
class StageRecord:
    index: int
    params: DeformationParams
    t: float
    rho_gain: float
    tau: float
    c_before: float
    c_after: float
    cerami_before: float
    angle: float
    lambda_face_max: float
    lambda_ok: bool


@dataclass
class MinimaxState:
    w: np.ndarray                 # image of e under the composite
    p: np.ndarray                 # maximizer parameters on the current fiber
    best_point: np.ndarray        # coordinates of the maximizer
    best_measure: float
    stages: list = field(default_factory=list)
    c_history: list = field(default_factory=list)
    gap0: float = 0.0
    snapshots: list = field(default_factory=list)   # (measure, z) along the way

    @property
    def c(self) -> float:
        return self.c_history[-1]


def _start_params(frame: LinkingFrame, n_starts: int, seed) -> list:
    """First start at (r₁/2, 0); the rest drawn one at a time so that a longer
    list extends a shorter one."""
    rng = np.random.default_rng(seed)
    out = [np.concatenate([[0.5 * frame.r1], np.zeros(frame.d2)])]
    for _ in range(n_starts - 1):
        r = frame.r1 * rng.uniform()
        y = (_e2_directions(frame.d2, 1, rng)[:, 0] * frame.y_radius * rng.uniform()
             if frame.d2 else np.zeros(0))
        out.append(_project(frame, np.concatenate([[r], y])))
    return out


def _multistart(model, frame, w, n_starts, seed) -> FiberMax:
    best = None
    for p0 in _start_params(frame, n_starts, seed):
        try:
            res = fiber_maximize(model, frame, w, p0)
        except (MaximizerError, np.linalg.LinAlgError):
            continue
        if best is None or res.value > best.value + 1e-12 * (1.0 + abs(best.value)):
            best = res
    if best is None:
        raise MaximizerError("every start of the fiber ascent failed")
    return best


def _as_output(model, z):
    return model.field(z) if isinstance(model, EnergyModel) else z


def initialize(model: SplitFunctional, frame: LinkingFrame, n_maximizer_starts: int = 8,
               seed: int = 0) -> MinimaxState:
    """Identity composite: c₀ = max of I over Q̄ by multistart ascent."""
    try:
        best = _multistart(model, frame, frame.e.copy(), n_maximizer_starts, seed)
    except MaximizerError as exc:
        raise InitializationError(str(exc)) from exc
    measure = float(model.cerami(best.z))
    state = MinimaxState(frame.e.copy(), best.p, best.z, measure, c_history=[best.value],
                         gap0=max(best.value - frame.alpha, 0.0))
    state.snapshots.append((measure, best.z.copy()))
    return state


def locate_maximizer(state: MinimaxState, model: SplitFunctional, frame: LinkingFrame,
                     n_starts: int = 8, seed: int = 0):
    """Multistart maximum of I over the current deformed Q̄: (point, value)."""
    best = _multistart(model, frame, state.w, n_starts, seed)
    return _as_output(model, best.z), float(model.energy(best.z))


def _stage_params(model, frame, rho_gain, tau, gnorm) -> DeformationParams:
    # the image of Q̄ under a rotation lies in B_{√(r₁² + r₂²)} ⊂ B_{R/2}
    radius = math.hypot(frame.r1, frame.r2 or 0.0)
    R = float(math.ceil(2.0 * radius))
    return DeformationParams(R=R, rho_gain=rho_gain, epsilon=0.099, s_count=1, M=gnorm,
                             eps_bar=float("nan"), delta=float("nan"), k=int(round(1 / tau)),
                             chi=build_chi(R, n_check=200), L_sum=float(sum(model.L_norms)),
                             k_bound=float("nan"), certified=False)


def lambda_constraint(model, frame: LinkingFrame, w, n: int = 64, seed: int = 0) -> float:
    """Max of I over the images of the boundary faces under the composite."""
    rng = np.random.default_rng(seed)
    P = _fiber_basis(frame, w)
    d2 = frame.d2
    dirs = _e2_directions(d2, n, rng) if d2 else np.zeros((0, n))
    rad = frame.y_radius
    if frame.variant == "box":
        faces = [np.vstack([np.full(n, frame.r1), dirs * rad * rng.uniform(size=n)]),
                 np.vstack([frame.r1 * rng.uniform(size=n), dirs * rad])]
    else:
        th = 0.5 * np.pi * rng.uniform(size=n)
        faces = [np.vstack([frame.r1 * np.cos(th), dirs * frame.r1 * np.sin(th)])]
    pts = np.concatenate(faces + [np.vstack([np.zeros(n), dirs * rad * rng.uniform(size=n)])],
                         axis=1)
    return float(np.max(model.energy(P @ pts)))


def descend(state: MinimaxState, model: SplitFunctional, frame: LinkingFrame,
            shrink: float = 0.5, armijo: float = 1e-4, max_halvings: int = 12,
            tol: float = 1e-12) -> MinimaxState:
    """Append one stage and move to the maximizer on the new fiber."""
    if not 0.0 < shrink < 1.0:
        raise ParameterError("shrink must lie in (0, 1)")
    n = len(state.stages)
    rho_gain = shrink ** (n + 1) * state.gap0
    z = state.best_point
    E = state.c
    g = model.gradient(z)
    g1 = np.where(frame.e1, g, 0.0)
    g1 -= state.w * (state.w @ g1)
    gn2 = float(g1 @ g1)
    tau = 1.0
    trial = None
    for _ in range(max_halvings + 1):
        v = np.where(frame.e1, z - tau * g, 0.0)
        w_new = v / np.linalg.norm(v)
        res = fiber_maximize(model, frame, w_new, state.p)
        if res.value <= E - armijo * tau * gn2:
            trial = (w_new, res)
            break
        if trial is None or res.value < trial[1].value:
            trial = (w_new, res)
        tau *= 0.5
    else:
        tau *= 2.0
    w_new, res = trial
    if res.value > E + rho_gain + tol:
        raise DescentAnomaly(
            f"stage {n}: sup rose from {E:.15g} to {res.value:.15g} (allowance {rho_gain:.3e})",
            trace={"c_history": list(state.c_history), "tau": tau, "grad_norm": math.sqrt(gn2)})
    angle = float(np.arccos(np.clip(state.w @ w_new, -1.0, 1.0)))
    face_max = lambda_constraint(model, frame, w_new, seed=n)
    params = _stage_params(model, frame, rho_gain, tau, float(np.linalg.norm(g)))
    state.stages.append(StageRecord(n, params, 1.0, rho_gain, tau, E, res.value,
                                    state.best_measure, angle, face_max,
                                    face_max <= 0.25 * frame.alpha))
    state.w, state.p, state.best_point = w_new, res.p, res.z
    state.best_measure = float(model.cerami(res.z))
    state.c_history.append(res.value)
    state.snapshots.append((state.best_measure, res.z.copy()))
    return state


# ---------------------------------------------------------------------------
# Newton certification on the nodal equations

@dataclass
class NewtonResult:
    u: Field
    residuals: list              # induced norm of I′ after each iterate (iterate 0 first)
    corrections: list            # L² norms of the Newton corrections
    order: float | None
    converged: bool

    @property
    def residual(self) -> float:
        return self.residuals[-1]


def fit_order(seq) -> float | None:
    """q from the last three terms: log(e₃/e₂)/log(e₂/e₁)."""
    if len(seq) < 3:
        return None
    e1, e2, e3 = seq[-3:]
    if min(e1, e2, e3) <= 0 or e2 >= e1:
        return None
    return float(math.log(e3 / e2) / math.log(e2 / e1))


def refine_newton(model: EnergyModel, u0, tol: float = 1e-12, max_iter: int = 30,
                  max_start_measure: float | None = None, dps: int = DPS,
                  n_refine: int = 3) -> NewtonResult:
    """Newton iteration on the nodal equations w(Au − h f(u)) = 0.

    Iterate and residuals live in ``dps``-digit arithmetic; each sparse solve
    runs in double and is polished by ``n_refine`` rounds of iterative
    refinement.  Iteration continues past ``tol`` until the correction drops
    below 10^(−dps/2), so the tail of the correction sequence shows the
    asymptotic rate, and the order is fitted on the last three corrections.
    """
    u = np.asarray(u0.values if isinstance(u0, Field) else u0, dtype=float)
    if max_start_measure is not None:
        m0 = float(model.cerami(model.to_coords(u)))
        if m0 > max_start_measure:
            raise RefinementError(f"starting measure {m0:.3e} exceeds {max_start_measure:.1e}")
    system = PreciseSystem(model, dps)
    w = model.quad_weights
    U = system.lift(u)
    res = [system.residual(U)]
    corr = []
    if res[0] <= tol:
        return NewtonResult(Field(u.copy(), model.grid), res, corr, None, True)
    stop = 10.0 ** (-dps / 2)
    with mpmath.workdps(dps):
        while len(corr) < max_iter:
            g = system.gradient(U)
            H = model.nodal_hessian(system.lower(U))
            rhs = [-x for x in g]
            D = system.lift(spsolve(H, system.lower(rhs)))
            for _ in range(n_refine):
                HD = system.hessian_apply(U, D)
                r = system.lower([a - b for a, b in zip(rhs, HD)])
                D = [a + mpmath.mpf(float(b)) for a, b in zip(D, spsolve(H, r))]
            d = system.lower(D)
            if not np.all(np.isfinite(d)):
                raise RefinementError("Newton system produced non-finite values")
            lam = 1.0
            for _ in range(30):
                trial = [a + lam * b for a, b in zip(U, D)]
                r_t = system.residual(trial)
                if r_t < res[-1]:
                    break
                lam *= 0.5
            else:
                if res[-1] <= tol:
                    break
                raise RefinementError(f"Newton line search failed at residual {res[-1]:.3e}")
            U = trial
            corr.append(lam * _l2(w, d))
            res.append(r_t)
            if res[-1] <= tol and corr[-1] <= stop * (1.0 + _l2(w, u)):
                break
    floor = 10.0 ** (-(dps - 10))
    useful = corr[:1]
    for c in corr[1:]:
        if c >= useful[-1] or c <= floor:
            break
        useful.append(c)
    return NewtonResult(Field(system.lower(U), model.grid), res, corr,
                        fit_order(useful), bool(res[-1] <= tol))


def newton_start_point(state: MinimaxState, upper: float = 1e-2):
    """First snapshot with measure ≤ upper (the final point if there is none)."""
    return next((z for m, z in state.snapshots if m <= upper), state.best_point)


def _l2(w, u) -> float:
    return float(np.sqrt(np.sum(w * np.asarray(u, dtype=float) ** 2)))


# ---------------------------------------------------------------------------
# driver

@dataclass
class SolveReport:
    converged: bool
    u_star: object
    z_star: np.ndarray
    c_est: float
    residual: float
    cerami: float
    alpha: float
    stages: int
    c_history: list
    diagnostics: CeramiDiagnostics
    norm_bound: float
    unbounded_flag: bool
    tail_monotone: bool
    newton: NewtonResult | None
    newton_error: str | None
    newton_distance: float | None
    newton_energy_gap: float | None
    lambda_ok: bool
    wall_time: float
    decrease_fraction: float
    stage_records: list = field(default_factory=list)

    @property
    def newton_refined(self) -> bool:
        return self.newton is not None and self.newton.converged

    def summary(self) -> dict:
        out = {"converged": self.converged, "c_est": self.c_est, "residual": self.residual,
               "cerami": self.cerami, "alpha": self.alpha, "stages": self.stages,
               "norm_bound": self.norm_bound, "unbounded_flag": self.unbounded_flag,
               "tail_monotone": self.tail_monotone, "lambda_ok": self.lambda_ok,
               "decrease_fraction": self.decrease_fraction, "wall_time": self.wall_time,
               "newton_refined": self.newton_refined, "newton_error": self.newton_error}
        if self.newton is not None:
            out.update(newton_residual=self.newton.residual, newton_order=self.newton.order,
                       newton_iterations=len(self.newton.corrections),
                       newton_distance=self.newton_distance,
                       newton_energy_gap=self.newton_energy_gap)
        return out


def _record(diag, it, model, z):
    g = np.linalg.norm(model.gradient(z))
    diag.append(it, float(model.energy(z)), float(g), float(np.linalg.norm(z)))


def solve(model: SplitFunctional, frame: LinkingFrame,
          opts: SolverOptions | None = None) -> SolveReport:
    opts = opts or SolverOptions()
    t0 = time.perf_counter()
    state = initialize(model, frame, opts.n_starts, opts.seed)
    diag = CeramiDiagnostics()
    _record(diag, 0, model, state.best_point)
    while state.best_measure > opts.tol and len(state.stages) < opts.max_stages:
        descend(state, model, frame, opts.shrink, opts.armijo, opts.max_halvings)
        _record(diag, len(state.stages), model, state.best_point)
    converged = state.best_measure <= opts.tol and state.c >= frame.alpha - opts.tol
    z = state.best_point
    norms = diag.column("u_norm")
    cer = diag.column("cerami")
    q = max(1, len(cer) // 4)
    tail_monotone = bool(np.all(np.diff(cer[-q:]) <= 1e-14))
    unbounded = bool(norms.max() > opts.norm_growth_flag * max(norms[0], 1e-300))
    drops = np.diff(state.c_history)
    decrease_fraction = float(np.mean(drops < 0)) if drops.size else 1.0

    newton = newton_err = dist = gap = None
    if converged and opts.newton and isinstance(model, EnergyModel):
        start = newton_start_point(state, opts.newton_start)
        try:
            newton = refine_newton(model, model.to_nodal(start), tol=opts.newton_tol)
            uref = newton.u.values
            ustar = model.to_nodal(z)
            dist = _l2(model.quad_weights, uref - ustar) / _l2(model.quad_weights, ustar)
            gap = abs(float(model.energy(model.to_coords(uref))) - state.c)
        except RefinementError as exc:
            newton_err = str(exc)
    return SolveReport(
        converged=bool(converged), u_star=_as_output(model, z), z_star=z.copy(), c_est=state.c,
        residual=float(np.linalg.norm(model.gradient(z))), cerami=state.best_measure,
        alpha=frame.alpha, stages=len(state.stages), c_history=list(state.c_history),
        diagnostics=diag, norm_bound=float(norms.max()), unbounded_flag=unbounded,
        tail_monotone=tail_monotone, newton=newton, newton_error=newton_err,
        newton_distance=dist, newton_energy_gap=gap,
        lambda_ok=all(s.lambda_ok for s in state.stages), wall_time=time.perf_counter() - t0,
        decrease_fraction=decrease_fraction, stage_records=list(state.stages))


def spectral_content(model: EnergyModel, z, rel: float = 1e-6) -> dict:
    """Number of negative and positive modes carrying at least ``rel`` of ‖z‖."""
    z = np.asarray(z, dtype=float)
    big = np.abs(z) >= rel * np.linalg.norm(z)
    lam = model.split.eigenvalues
    return {"minus": int(np.count_nonzero(big & (lam < 0))),
            "plus": int(np.count_nonzero(big & (lam > 0)))}
