"""Eigendecomposition of the discrete operator and the E⁻/E⁰/E⁺ splitting.

Eigenvectors are stored L²-orthonormal with respect to the quadrature
weights (φ = v/√w for Euclidean-orthonormal v), so that the coefficient of a
field u along φ_i is (φ_i, u)₂ = Σ w φ_i u.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .errors import DegenerateSpectrumError, DimensionError, SpectralError
from .grid import DiscreteOperator, Field, Grid, WeightSpec, evaluate_weight

DENSE_LIMIT = 4096
RESIDUAL_TOL = 1e-9
PARTS = ("plus", "minus", "zero", "E1", "E2")


@dataclass(frozen=True, eq=False)
class SpectralSplit:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray      # (n_total, n_pairs), columns L²-orthonormal
    neg_idx: np.ndarray
    zero_idx: np.ndarray
    pos_idx: np.ndarray
    sigma_minus: float | None
    sigma_plus: float | None
    zero_tol: float
    grid: Grid
    complete: bool = True

    @property
    def n_pairs(self) -> int:
        return self.eigenvalues.size

    @property
    def mu(self) -> np.ndarray:
        """Induced-norm weights: |λ| off the kernel, 1 on it."""
        m = np.abs(self.eigenvalues).copy()
        m[self.zero_idx] = 1.0
        return m

    @property
    def signs(self) -> np.ndarray:
        s = np.zeros(self.n_pairs)
        s[self.pos_idx] = 1.0
        s[self.neg_idx] = -1.0
        return s

    @property
    def e1_mask(self) -> np.ndarray:
        m = np.zeros(self.n_pairs, dtype=bool)
        m[self.pos_idx] = True
        return m

    @property
    def e2_mask(self) -> np.ndarray:
        return ~self.e1_mask

    @property
    def dims(self) -> dict:
        return {"minus": int(self.neg_idx.size), "zero": int(self.zero_idx.size),
                "plus": int(self.pos_idx.size)}

    def near_band(self, factor: float = 10.0) -> np.ndarray:
        """Eigenvalues within ``factor * zero_tol`` of zero."""
        lam = self.eigenvalues
        return lam[np.abs(lam) <= factor * max(self.zero_tol, np.finfo(float).tiny)]

    def coefficients(self, u) -> np.ndarray:
        u = _vals(self, u)
        w = self.grid.weights
        if u.ndim == 1:
            return self.eigenvectors.T @ (w * u)
        return self.eigenvectors.T @ (w[:, None] * u)

    def synthesize(self, c) -> np.ndarray:
        return self.eigenvectors @ c

    def part_indices(self, part: str) -> np.ndarray:
        if part == "plus" or part == "E1":
            return self.pos_idx
        if part == "minus":
            return self.neg_idx
        if part == "zero":
            return self.zero_idx
        if part == "E2":
            return np.concatenate([self.neg_idx, self.zero_idx])
        raise ValueError(f"unknown part {part!r}; expected one of {PARTS}")


def _vals(split: SpectralSplit, u) -> np.ndarray:
    if isinstance(u, Field):
        if not split.grid.compatible(u.grid):
            raise DimensionError("field lives on a different grid")
        return u.values
    u = np.asarray(u, dtype=float)
    if u.shape[0] != split.grid.n_total:
        raise DimensionError(f"vector of length {u.shape[0]} on a grid of {split.grid.n_total} nodes")
    return u


def _index_sets(lam, zero_tol):
    neg = np.flatnonzero(lam < -zero_tol)
    pos = np.flatnonzero(lam > zero_tol)
    zero = np.flatnonzero(np.abs(lam) <= zero_tol)
    return neg, zero, pos


def _build(lam, vecs, zero_tol, grid, complete):
    neg, zero, pos = _index_sets(lam, zero_tol)
    if neg.size == 0 and pos.size == 0:
        raise DegenerateSpectrumError(
            f"all {lam.size} eigenvalues lie within zero_tol={zero_tol:g} of 0")
    return SpectralSplit(
        eigenvalues=lam, eigenvectors=vecs, neg_idx=neg, zero_idx=zero, pos_idx=pos,
        sigma_minus=float(lam[neg].max()) if neg.size else None,
        sigma_plus=float(lam[pos].min()) if pos.size else None,
        zero_tol=float(zero_tol), grid=grid, complete=complete)


def _check_residuals(op: DiscreteOperator, lam, vecs_euclid):
    res = op.matrix @ vecs_euclid - vecs_euclid * lam
    r = np.linalg.norm(res, axis=0) / np.linalg.norm(vecs_euclid, axis=0)
    if np.any(r > RESIDUAL_TOL):
        j = int(np.argmax(r))
        raise SpectralError(
            f"eigenpair {j} (λ={lam[j]:.6g}) has residual {r[j]:.3e} > {RESIDUAL_TOL:g}")
    return r


def eigendecompose(op: DiscreteOperator, zero_tol: float | None = None,
                   method: str = "auto", n_eigs: int = 32) -> SpectralSplit:
    """Eigenpairs of ``op`` split by sign.

    ``method`` is ``"dense"`` (all pairs), ``"iterative"`` (shift-invert
    Lanczos around 0 returning the ``n_eigs`` pairs closest to 0, grown until
    at least a quarter of them are positive) or ``"auto"``.
    """
    n = op.grid.n_total
    if method == "auto":
        method = "dense" if n <= DENSE_LIMIT else "iterative"
    w = op.quad_weights
    if method == "dense":
        try:
            lam, v = np.linalg.eigh(op.dense())
        except np.linalg.LinAlgError as exc:
            raise SpectralError(f"dense eigensolve failed: {exc}") from exc
        if op.grid.dim == 1 and op.grid.spec.boundary == "dirichlet":
            lam = _refine_tridiagonal(op)
        complete = True
    elif method == "iterative":
        lam, v = _shift_invert(op, n_eigs)
        complete = False
    else:
        raise ValueError(f"unknown method {method!r}")
    _check_residuals(op, lam, v)
    if zero_tol is None:
        zero_tol = 1e-8 * float(np.max(np.abs(lam)))
    vecs = v / np.sqrt(w)[:, None]
    return _build(lam, vecs, zero_tol, op.grid, complete)


def _refine_tridiagonal(op):
    """Eigenvalues of a symmetric tridiagonal matrix to high relative accuracy.

    ``eigh`` is backward stable, which only bounds errors relative to ‖A‖; the
    bisection in ``eigvalsh_tridiagonal`` resolves small eigenvalues to
    near full relative precision when the absolute tolerance is tiny.
    """
    m = op.matrix
    d = m.diagonal()
    e = m.diagonal(1)
    return sla.eigvalsh_tridiagonal(d, e, lapack_driver="stebz",
                                    tol=2.0 * np.finfo(float).tiny)


def _shift_invert(op, n_eigs):
    n = op.grid.n_total
    k = min(n_eigs, n - 2)
    while True:
        try:
            lam, v = spla.eigsh(op.matrix.tocsc(), k=k, sigma=0.0, which="LM", tol=1e-13)
        except (spla.ArpackNoConvergence, RuntimeError) as exc:
            raise SpectralError(f"iterative eigensolve failed: {exc}") from exc
        order = np.argsort(lam)
        lam, v = lam[order], v[:, order]
        if np.sum(lam > 0) >= max(1, k // 4) or k >= n - 2:
            break
        k = min(2 * k, n - 2)
    v /= np.linalg.norm(v, axis=0)
    return lam, v


def classify(split: SpectralSplit, zero_tol: float) -> SpectralSplit:
    lam = split.eigenvalues
    if np.any(np.diff(lam) < 0):
        raise SpectralError("eigenvalues must be sorted ascending")
    new = _build(lam, split.eigenvectors, zero_tol, split.grid, split.complete)
    return new


def project(split: SpectralSplit, u, part: str) -> np.ndarray:
    idx = split.part_indices(part)
    c = split.coefficients(u)
    return split.eigenvectors[:, idx] @ c[idx]


def induced_norm_sq(split: SpectralSplit, u) -> float:
    c = split.coefficients(u)
    return float(np.sum(split.mu * c * c))


@dataclass(frozen=True, eq=False)
class ThresholdReport:
    a0: float
    attaining_vector: np.ndarray   # nodal values, in E₁, unit induced norm
    lower_bound: float
    weight_values: np.ndarray

    def __post_init__(self):
        if self.a0 < self.lower_bound - 1e-10:
            raise SpectralError(
                f"a0={self.a0:.12g} below the lower bound {self.lower_bound:.12g}")


def compute_a0(split: SpectralSplit, h) -> ThresholdReport:
    """Infimum over E₁ of ‖u‖²/∫h u².

    In E₁ coordinates u = Σ c_i φ_i this is the smallest μ with
    diag(λ) c = μ G c, G_ij = ∫ h φ_i φ_j.  It is solved in the symmetric
    form D^{-1/2} G D^{-1/2} y = (1/μ) y.
    """
    if split.pos_idx.size == 0:
        raise SpectralError("E1 is empty; a0 is undefined")
    hv = evaluate_weight(split.grid, h) if isinstance(h, WeightSpec) else np.asarray(h, float)
    if np.any(hv <= 0):
        raise SpectralError("weight must be positive on the grid")
    idx = split.pos_idx
    P = split.eigenvectors[:, idx]
    G = P.T @ ((split.grid.weights * hv)[:, None] * P)
    d = split.eigenvalues[idx]
    s = 1.0 / np.sqrt(d)
    try:
        ev, evec = np.linalg.eigh(s[:, None] * G * s[None, :])
    except np.linalg.LinAlgError as exc:
        raise SpectralError(f"generalized eigensolve failed: {exc}") from exc
    a0 = 1.0 / ev[-1]
    # y = D^{1/2} c has Euclidean norm = induced norm of u
    c = s * evec[:, -1]
    c /= np.sqrt(np.sum(d * c * c))
    u = P @ c
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return ThresholdReport(float(a0), u, float(split.sigma_plus / hv.max()), hv)


def spectral_report(split: SpectralSplit, threshold: ThresholdReport | None = None,
                    n_table: int = 12) -> str:
    lam = split.eigenvalues
    d = split.dims
    lines = ["SPECTRAL REPORT", ""]
    spec = split.grid.spec
    lines.append(f"grid: dim={spec.dim} n_per_axis={spec.n_per_axis} "
                 f"half_width={spec.half_width:g} boundary={spec.boundary}")
    lines.append(f"domain truncation: box [-L, L]^d with {spec.boundary} boundary "
                 "(whole-space problem replaced by a finite box)")
    lines.append(f"pairs computed: {split.n_pairs} ({'complete' if split.complete else 'partial'})")
    lines.append(f"zero_tol: {split.zero_tol:.6e}")
    lines.append(f"dim E-: {d['minus']}  dim E0: {d['zero']}  dim E+: {d['plus']}")
    lines.append(f"dim E2 (= E- + E0): {d['minus'] + d['zero']}"
                 + ("  [truncation of an infinite-dimensional space]"
                    if spec.boundary == "periodic" else ""))
    sm = "none" if split.sigma_minus is None else f"{split.sigma_minus:.12e}"
    sp_ = "none" if split.sigma_plus is None else f"{split.sigma_plus:.12e}"
    lines.append(f"sigma_minus: {sm}")
    lines.append(f"sigma_plus: {sp_}")
    near = split.near_band()
    lines.append("eigenvalues within 10*zero_tol of 0: "
                 + (", ".join(f"{x:.6e}" for x in near) if near.size else "none"))
    if threshold is not None:
        lines.append(f"a0: {threshold.a0:.12e}")
        lines.append(f"lower bound sigma_plus/h_inf: {threshold.lower_bound:.12e}")
    lines.append("")
    lines.append("eigenvalues nearest the gap:")
    lines.append(f"{'index':>6} {'eigenvalue':>22} {'class':>6}")
    centre = int(np.searchsorted(lam, 0.0))
    lo, hi = max(0, centre - n_table // 2), min(lam.size, centre + n_table // 2)
    cls = np.full(lam.size, "E0", dtype=object)
    cls[split.neg_idx] = "E-"
    cls[split.pos_idx] = "E+"
    for i in range(lo, hi):
        lines.append(f"{i:>6d} {lam[i]:>22.12e} {cls[i]:>6}")
    return "\n".join(lines) + "\n"
