"""The explicit deformation η_t(u) = u − (t/k)V(u) and its bookkeeping.

V(u) = χ(‖u₁‖)P₁I′(u) + χ(‖u₂‖)P₂I′(u) with a cutoff χ that is 1 up to R+1
and 0 from R+2 on.  Parameters follow the quantitative deformation
argument: ε̄ = min(ϱ, ε/2)/(Ms), δ from uniform differentiability at ε̄, and
the step count k, so that ks steps raise I by at most ϱ and, away from
critical points, lower it below c − ε/2.

All maps act on spectral coordinates (see :mod:`indeflink.energy`); Field
arguments are converted on the way in and out.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .energy import (GradientBound, SplitFunctional, estimate_gradient_bound,
                     in_ball, probe_uniform_differentiability, sample_ball)
from .errors import (ConstructionError, DifferentiabilityProbeError, InvarianceViolation,
                     InversionError, ParameterError)
from .grid import Field

BALL_SLACK = 1e-8


def smoothstep5(y):
    y = np.clip(y, 0.0, 1.0)
    return y**3 * (10.0 - 15.0 * y + 6.0 * y * y)


def smoothstep5_slope(y):
    y = np.clip(y, 0.0, 1.0)
    return 30.0 * y * y * (1.0 - y) ** 2


@dataclass(frozen=True)
class ChiCutoff:
    """χ(t) = S(R+2−t)² on [R+1, R+2], with S the quintic smoothstep.

    Squaring keeps χ C² and gives χ(t) ≤ (R+2−t)² on [R+3/2, R+2] because
    S(y) ≤ y for y ≤ ½ (equality only at y = ½).
    """
    R: float
    coeffs: tuple = (0.0, 0.0, 0.0, 10.0, -15.0, 6.0)   # S in increasing degree
    max_slope: float = field(default=float("nan"))

    def __call__(self, t):
        y = self.R + 2.0 - np.asarray(t, dtype=float)
        return smoothstep5(y) ** 2

    def derivative(self, t):
        y = self.R + 2.0 - np.asarray(t, dtype=float)
        inside = (y > 0) & (y < 1)
        return np.where(inside, -2.0 * smoothstep5(y) * smoothstep5_slope(y), 0.0)


def build_chi(R: float, n_check: int = 10_000) -> ChiCutoff:
    if not R > 0:
        raise ValueError("R must be positive")
    chi = ChiCutoff(float(R))
    t = np.linspace(R, R + 3.0, n_check)
    v, d = chi(t), chi.derivative(t)
    lo, hi = t <= R + 1, t >= R + 2
    mid = ~lo & ~hi
    if np.any(v[lo] != 1.0) or np.any(v[hi] != 0.0):
        raise ConstructionError("cutoff is not 1 below R+1 and 0 above R+2")
    if np.any(d[mid] >= 0):
        raise ConstructionError("cutoff is not strictly decreasing on (R+1, R+2)")
    tail = (t >= R + 1.5) & (t <= R + 2)
    if np.any(v[tail] > (R + 2 - t[tail]) ** 2 + 4 * np.finfo(float).eps):
        raise ConstructionError("cutoff violates χ(t) ≤ (R+2−t)² near R+2")
    # max |χ'| on a fine grid of the transition band
    y = np.linspace(0.0, 1.0, 100_001)
    slope = float(np.max(2.0 * smoothstep5(y) * smoothstep5_slope(y)))
    return ChiCutoff(float(R), max_slope=slope)


@dataclass(frozen=True)
class DeformationParams:
    R: float
    rho_gain: float
    epsilon: float
    s_count: int
    M: float
    eps_bar: float
    delta: float
    k: int
    chi: ChiCutoff
    L_sum: float
    k_bound: float
    gradient_bound: GradientBound | None = None
    certified: bool = True

    @property
    def step(self) -> float:
        return 1.0 / self.k

    @property
    def n_steps(self) -> int:
        return self.k * self.s_count


def s_count_for(R: float) -> int:
    return int(math.ceil((R + 2.0) ** 2 - 1e-12))


def k_lower_bound(M: float, delta: float, R: float, chi_slope: float, L_sum: float) -> float:
    """Right-hand side of 1/k < min(δ/2M, 1/(8(R+2)(1 + max|χ′|(‖L₁‖+‖L₂‖))))
    rewritten as k > bound."""
    return max(2.0 * M / delta, 8.0 * (R + 2.0) * (1.0 + chi_slope * L_sum))


def smallest_power_of_two_above(x: float) -> int:
    k = 1
    while k <= x:
        k *= 2
    return k


def select_params(model: SplitFunctional, R: float, rho_gain: float, epsilon: float,
                  M: float | None = None, n_probe: int = 64, n_grad: int = 200,
                  seed: int = 0) -> DeformationParams:
    if not 0.0 < epsilon < 0.1:
        raise ParameterError("epsilon must lie in (0, 1/10)")
    if not rho_gain > 0:
        raise ParameterError("rho_gain must be positive")
    chi = build_chi(R)
    s = s_count_for(R)
    gb = None
    if M is None:
        gb = estimate_gradient_bound(model, R + 2.0, n_samples=n_grad, seed=seed)
        M = gb.M
    eps_bar = min(rho_gain, epsilon / 2.0) / (M * s)
    try:
        delta = probe_uniform_differentiability(model, R, eps_bar, n_samples=n_probe, seed=seed)
    except DifferentiabilityProbeError as exc:
        raise ParameterError(str(exc)) from exc
    L_sum = float(sum(model.L_norms))
    bound = k_lower_bound(M, delta, R, chi.max_slope, L_sum)
    k = smallest_power_of_two_above(bound)
    return DeformationParams(R=float(R), rho_gain=float(rho_gain), epsilon=float(epsilon),
                             s_count=s, M=float(M), eps_bar=eps_bar, delta=delta, k=k, chi=chi,
                             L_sum=L_sum, k_bound=bound, gradient_bound=gb)


# ---------------------------------------------------------------------------
# the map

def _to_z(model, u):
    if isinstance(u, Field):
        return model.to_coords(u.values), True
    return np.asarray(u, dtype=float), False


def _out(model, z, was_field):
    return model.field(z) if was_field else z


def _cutoffs(model, params, z):
    n1, n2 = model.component_norms(z)
    c1, c2 = params.chi(n1), params.chi(n2)
    if z.ndim == 1:
        return np.where(model.e1, c1, c2)
    return np.where(model.e1[:, None], c1[None, :], c2[None, :])


def vector_field(model: SplitFunctional, params: DeformationParams, u):
    z, was = _to_z(model, u)
    V = _cutoffs(model, params, z) * model.gradient(z)
    return _out(model, V, was)


def _t_factor(t, z):
    t = np.asarray(t, dtype=float)
    if np.any((t < 0) | (t > 1)):
        raise ValueError("t must lie in [0, 1]")
    return t if t.ndim == 0 or z.ndim == 1 else t[None, :]


def eta_step(model: SplitFunctional, params: DeformationParams, t, u):
    z, was = _to_z(model, u)
    tf = _t_factor(t, z)
    out = z - (tf / params.k) * (_cutoffs(model, params, z) * model.gradient(z))
    return _out(model, out, was)


@dataclass
class IterationRecord:
    """Per-step energies, cutoff-weighted field norms and component norms."""
    energies: np.ndarray
    field_norms: np.ndarray
    norms1: np.ndarray
    norms2: np.ndarray


def eta_iterate(model: SplitFunctional, params: DeformationParams, t, u,
                n_steps: int | None = None, check_invariance: bool = True,
                record: bool = False):
    """ks-fold composite of :func:`eta_step` (or ``n_steps`` of them).

    ``t`` may be a scalar or one value per column of a batch.  With
    ``record=True`` returns ``(final, IterationRecord)``; rows of the record
    are iterates 0..n_steps.
    """
    z, was = _to_z(model, u)
    z = z.copy()
    n = params.n_steps if n_steps is None else int(n_steps)
    tf = _t_factor(t, z)
    scale = tf / params.k
    limit = params.R + 2.0 + BALL_SLACK
    rows = []
    start_inside = in_ball(model, z, params.R + 2.0, BALL_SLACK)
    if not record and np.all(scale == 0):
        n = 0   # η₀ is the identity
    d2 = model.e2_leading
    for j in range(n + 1):
        n1, n2 = model.component_norms(z)
        if check_invariance and j > 0:
            bad = ((n1 > limit) | (n2 > limit)) & start_inside
            if np.any(bad):
                raise InvarianceViolation(
                    f"iterate {j} left the ball of radius R+2={params.R + 2:g}: "
                    f"component norms {float(np.max(n1)):.12g}, {float(np.max(n2)):.12g}")
        if record or j == n:
            E, V = model.energy_and_gradient(z)
        else:
            V = model.gradient(z)
        c1, c2 = params.chi(n1), params.chi(n2)
        if d2 is not None:
            V[:d2] *= c2
            V[d2:] *= c1
        elif z.ndim == 1:
            V *= np.where(model.e1, c1, c2)
        else:
            V *= np.where(model.e1[:, None], c1[None, :], c2[None, :])
        if record:
            rows.append((E, np.linalg.norm(V, axis=0), n1, n2))
        if j == n:
            break
        V *= scale
        z -= V
    out = _out(model, z, was)
    if record:
        rec = IterationRecord(*(np.array(col) for col in zip(*rows)))
        return out, rec
    return out


def split_UK(model: SplitFunctional, params: DeformationParams, t, u):
    """Invertible part U_t(u) = Σ(Id − (t/k)χ(‖u_i‖)L_i)u_i and compact part
    K_t(u) = −(t/k)Σχ(‖u_i‖)P_iB′(u)."""
    z, was = _to_z(model, u)
    tf = _t_factor(t, z)
    cut = _cutoffs(model, params, z) * (tf / params.k)
    U = z - cut * model.linear(z)
    K = -cut * model.grad_B(z)
    return _out(model, U, was), _out(model, K, was)


def apply_U(model, params, t, u):
    return split_UK(model, params, t, u)[0]


@dataclass(frozen=True)
class InversionInfo:
    iterations: int
    max_ratio: float


def invert_U(model: SplitFunctional, params: DeformationParams, t: float, w,
             tol: float = 1e-12, max_iter: int = 200, info: bool = False):
    """Solve U_t(v) = w componentwise by the fixed point v ← (t/k)χ(‖v‖)L_i v + w_i."""
    wz, was = _to_z(model, w)
    if wz.ndim != 1:
        raise ValueError("invert_U expects a single state")
    tf = float(t) / params.k
    v = wz.copy()
    worst = 0.0
    its = 0
    for mask in (model.e1, model.e2):
        if not mask.any():
            continue
        wi = wz[mask]
        li = model.l_diag[mask]
        x = wi.copy()
        prev_step = None
        for it in range(1, max_iter + 1):
            x_new = tf * params.chi(np.linalg.norm(x)) * li * x + wi
            step = np.linalg.norm(x_new - x)
            if prev_step is not None and prev_step > 0 and step > 0:
                ratio = step / prev_step
                worst = max(worst, ratio)
                if ratio > 0.9 and step > tol:
                    raise InversionError(f"fixed-point map is not contracting (ratio {ratio:.3f})")
            x = x_new
            its = max(its, it)
            prev_step = step
            if step <= tol * (1.0 + np.linalg.norm(wi)):
                break
        else:
            raise InversionError("fixed-point iteration did not reach the tolerance")
        v[mask] = x
    out = _out(model, v, was)
    return (out, InversionInfo(its, worst)) if info else out


# ---------------------------------------------------------------------------
# checkers

@dataclass
class PropertyIReport:
    rho_gain: float
    max_excess: float            # max over samples of I(η^{ks}_t(u)) − I(u) − ϱ
    per_t_max_gain: dict
    max_component_norm: float
    n_samples: int
    holds: bool


def check_property_i(model: SplitFunctional, params: DeformationParams, z0: np.ndarray,
                     ts=(0.0, 0.5, 1.0), slack: float = 1e-10) -> PropertyIReport:
    """I(η^{ks}_t(u)) ≤ I(u) + ϱ for every column of ``z0`` and every t.

    All trajectories are advanced together; ball invariance of every
    intermediate iterate is enforced inside :func:`eta_iterate`.
    """
    m = z0.shape[1]
    ts = tuple(float(t) for t in ts)
    Z = np.concatenate([z0] * len(ts), axis=1)
    T = np.repeat(np.array(ts), m)
    E0 = model.energy(Z)
    moving = T > 0
    Zf = Z.copy()
    if moving.any():
        Zf[:, moving] = eta_iterate(model, params, T[moving], Z[:, moving])
    E1 = model.energy(Zf)
    gain = E1 - E0
    n1, n2 = model.component_norms(Zf)
    per_t = {t: float(gain[T == t].max()) for t in ts}
    excess = float(np.max(gain - params.rho_gain))
    return PropertyIReport(params.rho_gain, excess, per_t, float(max(n1.max(), n2.max())),
                           m, bool(excess <= slack))


@dataclass
class PropertyIIReport:
    c: float
    epsilon: float
    premise_min_cerami: float
    premise_threshold: float
    premise_holds: bool
    n_premise_samples: int
    final_energies: np.ndarray
    start_energies: np.ndarray
    case_labels: list
    conclusion_holds: bool

    @property
    def implication_holds(self) -> bool:
        return (not self.premise_holds) or self.conclusion_holds


def sample_slab(model, radius, c, eps, n, rng, max_batches=2000, batch=2000):
    """Rejection sample of 𝓑_radius ∩ I⁻¹([c−ε, c+ε])."""
    found = []
    total = 0
    for _ in range(max_batches):
        z = sample_ball(model, radius, batch, rng)
        E = model.energy(z)
        keep = np.abs(E - c) <= eps
        if keep.any():
            found.append(z[:, keep])
            total += int(keep.sum())
        if total >= n:
            break
    if total < n:
        raise ParameterError(f"only {total} of {n} slab samples found")
    return np.concatenate(found, axis=1)[:, :n]


def classify_cases(rec: IterationRecord, c: float, eps: float, R: float) -> list:
    """Label each trajectory I, II or III by how it first leaves
    𝓑_{R+1} ∩ I⁻¹([c−ε, c+ε]) (never / through the energy slab / through the ball)."""
    labels = []
    inside_ball = (rec.norms1 <= R + 1) & (rec.norms2 <= R + 1)
    in_slab = np.abs(rec.energies - c) <= eps
    for col in range(rec.energies.shape[1]):
        ok = inside_ball[1:, col] & in_slab[1:, col]
        if ok.all():
            labels.append("I")
            continue
        m = int(np.argmin(ok)) + 1
        labels.append("III" if not inside_ball[m, col] else "II")
    return labels


def check_property_ii(model: SplitFunctional, params: DeformationParams, c: float,
                      n_starts: int = 50, n_premise: int = 2000, seed: int = 0,
                      tol: float = 1e-12) -> PropertyIIReport:
    """If (1+‖w‖)‖I′(w)‖ ≥ √(2ε) on the sampled slab in 𝓑_{R+1}, then every
    sampled start u ∈ 𝓑_{R/2} in the slab ends with I(η₁^{ks}(u)) ≤ c − ε/2."""
    rng = np.random.default_rng(seed)
    eps = params.epsilon
    w = sample_slab(model, params.R + 1.0, c, eps, n_premise, rng)
    cer = model.cerami(w)
    thr = math.sqrt(2.0 * eps)
    starts = sample_slab(model, params.R / 2.0, c, eps, n_starts, rng)
    final, rec = eta_iterate(model, params, 1.0, starts, record=True)
    Ef = model.energy(final)
    labels = classify_cases(rec, c, eps, params.R)
    return PropertyIIReport(
        c=c, epsilon=eps, premise_min_cerami=float(cer.min()), premise_threshold=thr,
        premise_holds=bool(cer.min() >= thr), n_premise_samples=n_premise,
        final_energies=Ef, start_energies=model.energy(starts), case_labels=labels,
        conclusion_holds=bool(np.all(Ef <= c - eps / 2.0 + tol)))


# ---------------------------------------------------------------------------

def write_trace(path, rec: IterationRecord, labels, stage: int = 0):
    """CSV rows (stage, trajectory, j, I, ‖V‖, case_label)."""
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["stage", "trajectory", "j", "I", "V_norm", "case_label"])
        E, Vn = np.atleast_2d(rec.energies.T).T, np.atleast_2d(rec.field_norms.T).T
        for col in range(E.shape[1]):
            for j in range(E.shape[0]):
                wr.writerow([stage, col, j, f"{E[j, col]:.15e}", f"{Vn[j, col]:.15e}",
                             labels[col] if labels else ""])
