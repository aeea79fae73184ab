"""Linking frame: the vector e, the sphere S = ∂B_ρ ∩ E₁ and the set Q.

Two shapes of Q are supported:

``box``
    Q = {re : 0 ≤ r ≤ r₁} ⊕ (E₂ ∩ B_{r₂}), with boundary faces
    Q1 = {0} ⊕ (E₂ ∩ B_{r₂}), Q2 = [0, r₁]e ⊕ (E₂ ∩ ∂B_{r₂}),
    Q3 = {r₁e} ⊕ (E₂ ∩ B_{r₂}).
``ball``
    Q = {re + u₂ : r ≥ 0, ‖re + u₂‖ ≤ r₁}, with boundary made of the
    spherical cap and the base {r = 0, ‖u₂‖ ≤ r₁}.

Points of Q are parametrized by (r, y) with y the E₂ coordinates, and all
points are spectral coordinates of the model (see :mod:`indeflink.energy`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import least_squares, minimize_scalar

from .energy import EnergyModel, SplitFunctional, spectral_smoothing
from .errors import (CalibrationError, DimensionError, GrowthError, HomotopyValidationError,
                     HypothesisViolation)
from .grid import Field
from .spectral import SpectralSplit, ThresholdReport

VARIANTS = ("box", "ball")
FACES = {"box": ("Q1", "Q2", "Q3"), "ball": ("cap", "base")}
SUBSPACE_DIM = 32
MAX_GROWTH = 2.0**16


@dataclass(frozen=True, eq=False)
class LinkingFrame:
    e: np.ndarray            # coordinates, unit norm, supported in E₁
    e1: np.ndarray           # boolean mask of E₁
    rho: float
    r1: float
    r2: float | None
    alpha: float
    variant: str = "box"
    omega: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0.0 < self.rho < self.r1:
            raise ValueError("need 0 < rho < r1")
        if self.variant == "box" and not (self.r2 is not None and self.r2 > self.r1):
            raise ValueError("the box variant needs r2 > r1")
        if not self.alpha > self.omega:
            raise ValueError("need alpha > omega")
        if np.any(self.e[~self.e1] != 0) or abs(np.linalg.norm(self.e) - 1.0) > 1e-10:
            raise ValueError("e must be a unit vector in E1")

    @classmethod
    def for_subspaces(cls, d1: int, d2: int, rho: float, r1: float, r2: float | None = None,
                      variant: str = "box", alpha: float = 1.0) -> "LinkingFrame":
        """Frame on R^{d1} ⊕ R^{d2} with e the first basis vector of E₁."""
        e1 = np.concatenate([np.ones(d1, bool), np.zeros(d2, bool)])
        e = np.zeros(d1 + d2)
        e[0] = 1.0
        return cls(e, e1, float(rho), float(r1), None if r2 is None else float(r2), alpha, variant)

    @property
    def e2_index(self) -> np.ndarray:
        return np.flatnonzero(~self.e1)

    @property
    def d2(self) -> int:
        return int(np.count_nonzero(~self.e1))

    @property
    def y_radius(self) -> float:
        return self.r2 if self.variant == "box" else self.r1

    def embed(self, r, y) -> np.ndarray:
        """z = r·e + y for scalar/1D (r, y) or batches r (m,), y (d2, m)."""
        r = np.asarray(r, dtype=float)
        y = np.asarray(y, dtype=float)
        if y.ndim == 1:
            z = r * self.e
        else:
            z = self.e[:, None] * r[None, :]
        z[self.e2_index] += y
        return z

    def as_dict(self) -> dict:
        return {"variant": self.variant, "rho": self.rho, "r1": self.r1, "r2": self.r2,
                "alpha": self.alpha, "omega": self.omega}


# ---------------------------------------------------------------------------
# the vector e

def choose_e(split: SpectralSplit, threshold: ThresholdReport, a: float) -> Field:
    """Unit vector of E₁ with 1 ≤ (a − ε)∫h e², ε = (a − a₀)/2."""
    if not a > threshold.a0:
        raise HypothesisViolation(
            f"the linking frame needs a > a₀; got a={a:.6g}, a₀={threshold.a0:.6g}")
    e = np.array(threshold.attaining_vector, dtype=float)
    c = split.coefficients(e)
    norm = np.sqrt(np.sum(split.mu * c * c))
    e /= norm
    margin = linking_margin(split, threshold.weight_values, e, a, threshold.a0)
    if margin < 0:
        raise HypothesisViolation(f"(a − ε)∫h e² − 1 = {margin:.3e} is negative")
    return Field(e, split.grid)


def linking_margin(split: SpectralSplit, h_values, e, a: float, a0: float) -> float:
    """(a − ε)∫h e² − 1 with ε = (a − a₀)/2."""
    ev = e.values if isinstance(e, Field) else np.asarray(e, float)
    integral = float(np.sum(split.grid.weights * np.asarray(h_values) * ev * ev))
    return (a - 0.5 * (a - a0)) * integral - 1.0


def _e_coords(model: SplitFunctional, e) -> np.ndarray:
    if isinstance(e, Field):
        if not isinstance(model, EnergyModel):
            raise TypeError("a Field needs an energy model")
        z = model.to_coords(e.values)
    else:
        z = np.array(e, dtype=float)
    if np.linalg.norm(z[model.e2]) > 1e-10 * max(1.0, np.linalg.norm(z)):
        raise ValueError("e has a component in E2")
    z[model.e2] = 0.0
    n = np.linalg.norm(z)
    if abs(n - 1.0) > 1e-8:
        raise ValueError(f"e must have unit induced norm (got {n:.12g})")
    return z / n


# ---------------------------------------------------------------------------
# samplers

def _unit_columns(g):
    n = np.linalg.norm(g, axis=0)
    n[n == 0] = 1.0
    return g / n


def _e1_directions(frame: LinkingFrame, n: int, rng, smooth=None) -> np.ndarray:
    idx = np.flatnonzero(frame.e1)
    g = rng.standard_normal((idx.size, n))
    if smooth is not None:
        g[:, : n // 2] *= smooth[idx][:, None]
    z = np.zeros((frame.e.size, n))
    z[idx] = _unit_columns(g)
    return z


def _e2_directions(d2: int, n: int, rng) -> np.ndarray:
    """Unit vectors in E₂ drawn batchwise from rotating random subspaces."""
    out = np.empty((d2, n))
    k = min(d2, SUBSPACE_DIM)
    for start in range(0, n, SUBSPACE_DIM):
        m = min(SUBSPACE_DIM, n - start)
        basis = np.linalg.qr(rng.standard_normal((d2, k)))[0] if k < d2 else np.eye(d2)
        out[:, start:start + m] = basis @ _unit_columns(rng.standard_normal((k, m)))
    return out


def sample_S(frame: LinkingFrame, n: int, seed=0, smooth=None) -> np.ndarray:
    """``n`` points of ∂B_ρ ∩ E₁ as columns."""
    if n < 1:
        raise ValueError("n must be at least 1")
    rng = np.random.default_rng(seed)
    return frame.rho * _e1_directions(frame, n, rng, smooth)


@dataclass
class FaceSamples:
    points: np.ndarray       # (d, n)
    labels: np.ndarray       # face label per column

    def __iter__(self):
        return iter(zip(self.points.T, self.labels))

    def __len__(self):
        return self.points.shape[1]

    def face(self, label: str) -> np.ndarray:
        return self.points[:, self.labels == label]


def _face_points(frame: LinkingFrame, face: str, n: int, rng) -> np.ndarray:
    d2 = frame.d2
    if d2 == 0:
        dirs = np.zeros((0, n))
    else:
        dirs = _e2_directions(d2, n, rng)
    if face == "Q1":
        return frame.embed(np.zeros(n), dirs * frame.r2 * rng.uniform(size=n))
    if face == "Q2":
        return frame.embed(frame.r1 * rng.uniform(size=n), dirs * frame.r2)
    if face == "Q3":
        return frame.embed(np.full(n, frame.r1), dirs * frame.r2 * rng.uniform(size=n))
    if face == "cap":
        theta = 0.5 * np.pi * rng.uniform(size=n)
        if d2 == 0:
            theta[:] = 0.0
        return frame.embed(frame.r1 * np.cos(theta), dirs * frame.r1 * np.sin(theta))
    if face == "base":
        return frame.embed(np.zeros(n), dirs * frame.r1 * rng.uniform(size=n))
    raise ValueError(f"unknown face {face!r}")


def sample_boundary_Q(frame: LinkingFrame, n: int, seed=0) -> FaceSamples:
    """Stratified samples of ∂Q: ``n`` split evenly over the faces."""
    faces = FACES[frame.variant]
    if n < len(faces):
        raise ValueError(f"n must be at least {len(faces)}")
    rng = np.random.default_rng(seed)
    counts = [n // len(faces) + (1 if i < n % len(faces) else 0) for i in range(len(faces))]
    pts, labels = [], []
    for face, m in zip(faces, counts):
        pts.append(_face_points(frame, face, m, rng))
        labels += [face] * m
    return FaceSamples(np.concatenate(pts, axis=1), np.array(labels))


# ---------------------------------------------------------------------------
# local refinement of sampled extremes

def _refine_min_on_S(model, frame, z, n_iter=60):
    """Projected descent of I on the sphere ∂B_ρ ∩ E₁ from each column."""
    z = z.copy()
    e1 = frame.e1
    E = model.energy(z)
    step = np.full(z.shape[1], 0.5)
    for _ in range(n_iter):
        g = model.gradient(z)
        g[~e1] = 0.0
        g -= z * (np.sum(g * z, axis=0) / frame.rho**2)
        trial = z - step * g
        trial *= frame.rho / np.linalg.norm(trial, axis=0)
        Et = model.energy(trial)
        better = Et < E
        z[:, better] = trial[:, better]
        E = np.where(better, Et, E)
        step = np.where(better, step * 1.5, step * 0.25)
    return z, E


def _project_face(frame, face, r, y):
    rad = frame.y_radius
    if face in ("Q1", "base"):
        r = np.zeros_like(r)
    elif face == "Q3":
        r = np.full_like(r, frame.r1)
    elif face == "Q2":
        r = np.clip(r, 0.0, frame.r1)
    if face == "Q2":
        ny = np.linalg.norm(y, axis=0)
        ny[ny == 0] = 1.0
        return r, y * (rad / ny)
    if face == "cap":
        r = np.maximum(r, 0.0)
        scale = frame.r1 / np.maximum(np.sqrt(r * r + np.sum(y * y, axis=0)), 1e-300)
        return r * scale, y * scale
    ny = np.linalg.norm(y, axis=0)
    return r, y * np.minimum(1.0, rad / np.maximum(ny, 1e-300))


def _refine_max_on_face(model, frame, face, z, n_iter=60):
    """Projected ascent of I over one face of ∂Q from each column."""
    idx2 = frame.e2_index
    r = frame.e @ z
    y = z[idx2].copy()
    E = model.energy(z)
    step = np.full(z.shape[1], 0.5)
    for _ in range(n_iter):
        g = model.gradient(frame.embed(r, y))
        rt, yt = _project_face(frame, face, r + step * (frame.e @ g), y + step * g[idx2])
        Et = model.energy(frame.embed(rt, yt))
        better = Et > E
        r = np.where(better, rt, r)
        y[:, better] = yt[:, better]
        E = np.where(better, Et, E)
        step = np.where(better, step * 1.5, step * 0.25)
    return frame.embed(r, y), E


# ---------------------------------------------------------------------------
# calibration and verification

@dataclass
class GeometryReport:
    alpha: float
    min_S: float
    face_max: dict
    worst_S: np.ndarray
    worst_faces: dict
    n_per_set: int
    e2_max: float | None = None
    omega_bound: float = 0.0

    @property
    def holds(self) -> bool:
        return (self.min_S >= self.alpha > self.omega_bound
                and all(v <= self.omega_bound for v in self.face_max.values()))

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "min_S": self.min_S, "face_max": dict(self.face_max),
                "n_per_set": self.n_per_set, "e2_max": self.e2_max, "holds": self.holds}


def _min_over_S(model, frame, n, seed, refine=8):
    smooth = spectral_smoothing(model)
    z = sample_S(frame, n, seed, smooth)
    z = np.concatenate([z, frame.rho * frame.e[:, None]], axis=1)
    E = model.energy(z)
    if refine:
        worst = np.argsort(E)[:refine]
        zr, Er = _refine_min_on_S(model, frame, z[:, worst])
        z = np.concatenate([z, zr], axis=1)
        E = np.concatenate([E, Er])
    j = int(np.argmin(E))
    return float(E[j]), z[:, j]


def _max_over_face(model, frame, face, n, rng, refine=4):
    z = _face_points(frame, face, n, rng)
    E = model.energy(z)
    if refine:
        best = np.argsort(E)[-refine:]
        zr, Er = _refine_max_on_face(model, frame, face, z[:, best])
        z = np.concatenate([z, zr], axis=1)
        E = np.concatenate([E, Er])
    j = int(np.argmax(E))
    return float(E[j]), z[:, j]


def _trial_frame(e, e1, rho, r1, r2, variant):
    # alpha is not known during the search; a placeholder keeps the checks on
    return LinkingFrame(e, e1, rho, r1, r2, 1.0, variant)


def verify_geometry(model: SplitFunctional, frame: LinkingFrame, n: int = 1000, seed: int = 1,
                    refine: bool = True) -> GeometryReport:
    """Sampled min of I on S and sampled max of I on each face of ∂Q."""
    rng = np.random.default_rng(seed)
    min_S, worst_S = _min_over_S(model, frame, n, seed, refine=8 if refine else 0)
    face_max, worst = {}, {}
    for face in FACES[frame.variant]:
        face_max[face], worst[face] = _max_over_face(model, frame, face, n, rng,
                                                     refine=4 if refine else 0)
    e2_max = None
    if frame.variant == "ball" and frame.d2 > 0:
        # I(u₂) ≤ 0 on all of E₂, probed on growing spheres
        ys = _e2_directions(frame.d2, n, rng) * (frame.r1 * 4.0 ** rng.uniform(-3, 3, size=n))
        e2_max = float(np.max(model.energy(frame.embed(np.zeros(n), ys))))
    return GeometryReport(frame.alpha, min_S, face_max, worst_S, worst, n, e2_max,
                          omega_bound=frame.omega)


def calibrate_frame(model: SplitFunctional, e, variant: str = "box", n_samples: int = 256,
                    seed: int = 0, rho_range=(2.0**-8, 2.0**6)) -> LinkingFrame:
    """Choose ρ, α, r₁ (and r₂) so that sampled I|_S ≥ α > 0 ≥ sampled I|_∂Q."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    ez = _e_coords(model, e)
    e1 = model.e1.copy()
    probe = lambda rho: _min_over_S(model, _trial_frame(ez, e1, rho, 2 * rho, 4 * rho, variant),
                                    n_samples, seed, refine=0)[0]
    grid = 2.0 ** np.arange(np.log2(rho_range[0]), np.log2(rho_range[1]) + 0.25, 0.5)
    vals = np.array([probe(r) for r in grid])
    if not np.any(vals > 0):
        raise CalibrationError("no radius ρ gives a positive sampled minimum of I on S")
    j = int(np.argmax(vals))
    lo, hi = np.log2(grid[max(j - 1, 0)]), np.log2(grid[min(j + 1, grid.size - 1)])
    res = minimize_scalar(lambda s: -probe(2.0**s), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-3})
    rho = float(2.0 ** res.x) if -res.fun > vals[j] else float(grid[j])
    min_S, _ = _min_over_S(model, _trial_frame(ez, e1, rho, 2 * rho, 4 * rho, variant),
                           4 * n_samples, seed + 1)
    if not min_S > 0:
        raise CalibrationError(f"refined minimum of I on S is not positive ({min_S:.3e})")
    alpha = 0.5 * min_S

    rng = np.random.default_rng(seed + 2)
    r1 = 4.0 * rho
    face = "Q3" if variant == "box" else "cap"
    while True:
        trial = _trial_frame(ez, e1, rho, r1, 2 * r1, variant)
        top, _ = _max_over_face(model, trial, face, n_samples, rng)
        if top <= 0:
            break
        r1 *= 2.0
        if r1 > MAX_GROWTH * rho:
            raise GrowthError("r1 exceeded 2^16·ρ without I ≤ 0 on the outer face")
    r2 = 2.0 * r1 if variant == "box" else None
    frame = LinkingFrame(ez, e1, rho, r1, r2, alpha, variant)
    report = verify_geometry(model, frame, n_samples, seed + 3)
    if not report.holds:
        raise CalibrationError(f"re-verification failed: {report.as_dict()}")
    diag = {"min_S": min_S, "rho_grid": grid.tolist(), "rho_grid_min": vals.tolist(),
            "verification": report.as_dict()}
    return LinkingFrame(ez, e1, rho, r1, r2, alpha, variant, diagnostics=diag)


# ---------------------------------------------------------------------------
# the link definition on small truncations

@dataclass(frozen=True, eq=False)
class SigmaHomotopy:
    """Φ_t(u) = a_t(u) + (u₂ − W_t(u)) with W_t of finite rank.

    ``e1_part(t, z)`` returns the E₁ coordinates of Φ_t, ``compact_part(t, z)``
    the E₂ coordinates of W_t; both accept a column batch z of shape (d, m).
    W_t must take values in span(``compact_range``), whose dimension is below
    dim E₂: finite rank is how compactness is certified on a truncation.
    """
    name: str
    e1_part: Callable
    compact_part: Callable
    compact_range: np.ndarray

    def __call__(self, frame: LinkingFrame, t: float, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        batch = z if z.ndim == 2 else z[:, None]
        out = np.empty_like(batch)
        out[frame.e1] = self.e1_part(t, batch)
        out[~frame.e1] = batch[~frame.e1] - self.compact_part(t, batch)
        return out if z.ndim == 2 else out[:, 0]


def identity_homotopy(d1: int, d2: int) -> SigmaHomotopy:
    return SigmaHomotopy("identity", lambda t, z: z[:d1], lambda t, z: np.zeros((d2, z.shape[1])),
                         np.zeros((d2, 0)))


def validate_homotopy(frame: LinkingFrame, hom: SigmaHomotopy, n: int = 200, seed: int = 0,
                      tol: float = 1e-10) -> None:
    d2 = frame.d2
    B = np.asarray(hom.compact_range, dtype=float).reshape(d2, -1)
    if B.shape[1] >= d2:
        raise HomotopyValidationError(
            f"{hom.name}: W_t must have rank below dim E2 = {d2} (declared {B.shape[1]})")
    if B.shape[1]:
        B = np.linalg.qr(B)[0]
    rng = np.random.default_rng(seed)
    pts = sample_boundary_Q(frame, n, seed).points
    inner = frame.embed(frame.r1 * rng.uniform(size=n), _e2_directions(d2, n, rng)
                        * frame.y_radius * rng.uniform(size=n))
    Z = np.concatenate([pts, inner], axis=1)
    if np.max(np.abs(hom(frame, 0.0, Z) - Z)) > tol:
        raise HomotopyValidationError(f"{hom.name}: Φ_0 is not the identity")
    for t in np.linspace(0.0, 1.0, 11):
        W = np.asarray(hom.compact_part(t, Z), dtype=float)
        resid = W - B @ (B.T @ W) if B.shape[1] else W
        if np.max(np.abs(resid)) > tol * (1.0 + np.max(np.abs(W))):
            raise HomotopyValidationError(
                f"{hom.name}: W_t leaves its declared finite-rank range at t={t:g}")
        if not np.all(np.isfinite(hom(frame, t, Z))):
            raise HomotopyValidationError(f"{hom.name}: non-finite values at t={t:g}")


@dataclass
class LinkStep:
    t: float
    boundary_gap: float
    witness: np.ndarray | None
    residual: float
    status: str              # witness | boundary_hit | link_violation_candidate


@dataclass
class LinkReport:
    name: str
    steps: list

    @property
    def all_witnessed(self) -> bool:
        return all(s.status == "witness" for s in self.steps)

    @property
    def candidates(self) -> list:
        return [s.t for s in self.steps if s.status == "link_violation_candidate"]


def _distance_to_S(frame, P):
    n1 = np.linalg.norm(P[frame.e1], axis=0)
    n2 = np.linalg.norm(P[~frame.e1], axis=0)
    return np.hypot(n1 - frame.rho, n2)


def _in_Q(frame, r, y, slack=1e-12):
    if frame.variant == "box":
        return -slack <= r <= frame.r1 + slack and np.linalg.norm(y) <= frame.r2 * (1 + slack)
    return r >= -slack and np.hypot(r, np.linalg.norm(y)) <= frame.r1 * (1 + slack)


def verify_link_smallcase(frame: LinkingFrame, hom: SigmaHomotopy, n_grid: int = 21,
                          n_boundary: int = 3000, n_starts: int = 24, seed: int = 0,
                          tol: float = 1e-10, gap_floor: float = 1e-8) -> LinkReport:
    """For t on a grid: Φ_t(∂Q) avoids S on samples, and a root of
    P₂Φ_t(u) = 0, ‖P₁Φ_t(u)‖ = ρ is found in Q by multistart least squares."""
    d1, d2 = int(frame.e1.sum()), frame.d2
    if d1 > 6 or d2 > 6:
        raise DimensionError("the brute-force link check is limited to dim E1, dim E2 ≤ 6")
    validate_homotopy(frame, hom, seed=seed)
    rng = np.random.default_rng(seed)
    boundary = sample_boundary_Q(frame, n_boundary, seed).points
    rad = frame.y_radius
    lower = np.concatenate([[0.0], -rad * np.ones(d2)])
    upper = np.concatenate([[frame.r1], rad * np.ones(d2)])

    starts = [np.concatenate([[r], y]) for r, y in zip(
        frame.r1 * rng.uniform(size=n_starts),
        (_e2_directions(d2, n_starts, rng) * rad * rng.uniform(size=n_starts) / np.sqrt(2)).T)]
    prev = np.concatenate([[frame.rho], np.zeros(d2)])
    steps = []
    for t in np.linspace(0.0, 1.0, n_grid):
        gap = float(np.min(_distance_to_S(frame, hom(frame, t, boundary))))
        if gap <= gap_floor:
            steps.append(LinkStep(float(t), gap, None, np.nan, "boundary_hit"))
            continue

        def resid(p):
            P = hom(frame, t, frame.embed(p[0], p[1:]))
            return np.concatenate([P[~frame.e1], [np.linalg.norm(P[frame.e1]) - frame.rho]])

        found, best = None, np.inf
        for p0 in [prev] + starts:
            sol = least_squares(resid, np.clip(p0, lower, upper), bounds=(lower, upper),
                                xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
            res = float(np.linalg.norm(resid(sol.x)))
            best = min(best, res)
            if res <= tol and _in_Q(frame, sol.x[0], sol.x[1:]):
                found = sol.x
                break
        if found is None:
            steps.append(LinkStep(float(t), gap, None, best, "link_violation_candidate"))
        else:
            prev = found
            steps.append(LinkStep(float(t), gap, frame.embed(found[0], found[1:]), best, "witness"))
    return LinkReport(hom.name, steps)
