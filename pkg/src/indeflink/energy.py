"""The energy functional, its induced-metric gradient and diagnostic measures.

Every model works in *normalized spectral coordinates*: for an eigenpair
(λ_i, φ_i) with induced weight μ_i (|λ_i|, or 1 on the kernel) the field
u = Σ c_i φ_i has coordinates z_i = √μ_i c_i.  The induced norm of u is the
Euclidean norm of z, and

    I(z) = ½ Σ l_i z_i² + B(z),   l_i = sign(λ_i) (0 on the kernel),

so the linear part is L₁ = Id on E₁ = E⁺ and L₂ = −P⁻ on E₂ = E⁻ ⊕ E⁰.
All model methods accept a single state of shape (d,) or a batch (d, m).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, DifferentiabilityProbeError
from .grid import DiscreteOperator, Field
from .nonlinearity import NonlinearitySpec, eval_df, eval_F, eval_f
from .spectral import SpectralSplit


class SplitFunctional:
    """C¹ functional on R^d = E₁ ⊕ E₂ of the form ½⟨Lz, z⟩ + B(z).

    Subclasses set ``l_diag`` (diagonal of L), ``e1`` (boolean mask of E₁)
    and implement ``B`` and ``grad_B``.
    """

    l_diag: np.ndarray
    e1: np.ndarray

    @property
    def dim(self) -> int:
        return self.l_diag.size

    @property
    def e2(self) -> np.ndarray:
        return ~self.e1

    @property
    def e2_leading(self) -> int | None:
        """Size of E₂ when its coordinates come first, else None."""
        d2 = int(np.count_nonzero(~self.e1))
        return d2 if not self.e1[:d2].any() and self.e1[d2:].all() else None

    @property
    def L_norms(self) -> tuple:
        """(‖L₁‖, ‖L₂‖) as operator norms of the diagonal blocks."""
        l1 = np.abs(self.l_diag[self.e1])
        l2 = np.abs(self.l_diag[self.e2])
        return (float(l1.max()) if l1.size else 0.0, float(l2.max()) if l2.size else 0.0)

    def B(self, z):
        raise NotImplementedError

    def grad_B(self, z):
        raise NotImplementedError

    def linear(self, z):
        return _bcast(self.l_diag, z) * z

    def energy(self, z):
        z = np.asarray(z, dtype=float)
        return 0.5 * np.sum(self.linear(z) * z, axis=0) + self.B(z)

    def gradient(self, z):
        z = np.asarray(z, dtype=float)
        return self.linear(z) + self.grad_B(z)

    def energy_and_gradient(self, z):
        return self.energy(z), self.gradient(z)

    def component_norms(self, z):
        z = np.asarray(z, dtype=float)
        d2 = self.e2_leading
        if d2 is not None:
            return (np.linalg.norm(z[d2:], axis=0), np.linalg.norm(z[:d2], axis=0))
        return (np.linalg.norm(z[self.e1], axis=0), np.linalg.norm(z[self.e2], axis=0))

    def cerami(self, z):
        z = np.asarray(z, dtype=float)
        return (1.0 + np.linalg.norm(z, axis=0)) * np.linalg.norm(self.gradient(z), axis=0)

    def restricted_hessian(self, z, P, step: float = 1e-6):
        """Pᵀ I″(z) P by central differences of the gradient."""
        cols = [(self.gradient(z + step * p) - self.gradient(z - step * p)) / (2 * step)
                for p in P.T]
        H = P.T @ np.array(cols).T
        return 0.5 * (H + H.T)


def _bcast(vec, z):
    return vec if z.ndim == 1 else vec[:, None]


class EnergyModel(SplitFunctional):
    """Discrete I(u) = ½(Au, u)₂ − ∫ h F(u) on a grid, in spectral coordinates."""

    def __init__(self, op: DiscreteOperator, split: SpectralSplit, h_values,
                 nonlinearity: NonlinearitySpec):
        if not split.complete:
            raise ConfigurationError("the energy model needs a complete eigendecomposition")
        h = np.asarray(h_values.values if isinstance(h_values, Field) else h_values, float)
        if h.shape != (op.grid.n_total,) or np.any(h <= 0):
            raise ConfigurationError("h_values must be positive with one value per node")
        self.op = op
        self.split = split
        self.grid = op.grid
        self.h_values = h
        self.nonlinearity = nonlinearity
        self.quad_weights = op.quad_weights
        self.mu = split.mu
        self.sqrt_mu = np.sqrt(self.mu)
        self.l_diag = split.signs
        self.e1 = split.e1_mask
        self.T = split.eigenvectors / self.sqrt_mu        # z -> nodal u
        self.T_t = np.ascontiguousarray(self.T.T)
        self.wh = self.quad_weights * h
        self.G = self.T_t * self.wh[None, :]               # nodal f -> −grad_B
        d2 = int(np.count_nonzero(~self.e1))
        self._e2_leading = d2 if not self.e1[:d2].any() else None

    @property
    def e2_leading(self):
        return self._e2_leading

    # coordinate maps -------------------------------------------------------
    def to_nodal(self, z):
        return self.T @ z

    def to_coords(self, u):
        if isinstance(u, Field):
            u = u.values
        return _bcast(self.sqrt_mu, np.asarray(u)) * self.split.coefficients(u)

    def field(self, z) -> Field:
        return Field(self.to_nodal(z), self.grid)

    # functional ------------------------------------------------------------
    def B(self, z):
        u = self.to_nodal(np.asarray(z, dtype=float))
        return -np.sum(_bcast(self.wh, u) * eval_F(self.nonlinearity, u), axis=0)

    def grad_B(self, z):
        u = self.to_nodal(np.asarray(z, dtype=float))
        return -self.G @ eval_f(self.nonlinearity, u)

    def energy_and_gradient(self, z):
        z = np.asarray(z, dtype=float)
        u = self.T @ z
        wh = _bcast(self.wh, u)
        lz = self.linear(z)
        E = 0.5 * np.sum(lz * z, axis=0) - np.sum(wh * eval_F(self.nonlinearity, u), axis=0)
        g = lz - self.G @ eval_f(self.nonlinearity, u)
        return E, g

    def restricted_hessian(self, z, P, step=None):
        """Pᵀ I″(z) P = Pᵀ diag(l) P − (TP)ᵀ diag(w h f′(u)) (TP)."""
        TP = self.T @ P
        df = eval_df(self.nonlinearity, self.T @ z)
        H = (P * self.l_diag[:, None]).T @ P - TP.T @ (TP * (self.wh * df)[:, None])
        return 0.5 * (H + H.T)

    def nodal_hessian(self, u):
        """Sparse Hessian of the nodal energy in the nodal values."""
        df = eval_df(self.nonlinearity, np.asarray(u, dtype=float))
        W = sp.diags(self.quad_weights)
        return (W @ self.op.matrix - sp.diags(self.wh * df)).tocsc()

    # nodal routes used as independent checks --------------------------------
    def quadratic_form_nodal(self, u):
        """½(Au, u)₂ straight from the sparse matrix."""
        return 0.5 * float(np.sum(self.quad_weights * u * self.op.apply(u)))

    def euclidean_grad(self, u):
        """Gradient of the nodal energy with respect to the nodal values."""
        u = np.asarray(u)
        return self.quad_weights * (self.op.apply(u) - self.h_values * eval_f(self.nonlinearity, u))

    def induced_norm_of_euclidean(self, g):
        """Induced (dual) norm of the functional whose nodal gradient is g."""
        c = self.split.eigenvectors.T @ np.asarray(g, dtype=float)
        return float(np.sqrt(np.sum(c * c / self.mu)))


# ---------------------------------------------------------------------------
# nodal-facing operations

def _coords(model: EnergyModel, u):
    return model.to_coords(u.values if isinstance(u, Field) else np.asarray(u, float))


def eval_I(model: EnergyModel, u) -> float:
    return float(model.energy(_coords(model, u)))


def eval_B(model: EnergyModel, u) -> float:
    u = u.values if isinstance(u, Field) else np.asarray(u, float)
    return float(-np.sum(model.wh * eval_F(model.nonlinearity, u)))


def eval_grad(model: EnergyModel, u) -> Field:
    """Induced-metric gradient as a field on the grid."""
    g = model.gradient(_coords(model, u))
    return Field(model.to_nodal(g), model.grid)


def induced_pairing(model: EnergyModel, u, v) -> float:
    return float(np.dot(_coords(model, u), _coords(model, v)))


def euclidean_grad(model: EnergyModel, u) -> np.ndarray:
    u = u.values if isinstance(u, Field) else np.asarray(u, float)
    return model.euclidean_grad(u)


def cerami_measure(model: SplitFunctional, u) -> float:
    z = _coords(model, u) if isinstance(model, EnergyModel) else np.asarray(u, float)
    return float(model.cerami(z))


# ---------------------------------------------------------------------------
# sampling of the product balls 𝓑_r = {‖u₁‖ ≤ r, ‖u₂‖ ≤ r}

def _random_directions(rng, dim, n, smooth_weights=None):
    g = rng.standard_normal((dim, n))
    if smooth_weights is not None:
        g[:, : n // 2] *= smooth_weights[:, None]
    norms = np.linalg.norm(g, axis=0)
    norms[norms == 0] = 1.0
    return g / norms


def spectral_smoothing(model: SplitFunctional) -> np.ndarray | None:
    """Weights favouring low-|λ| modes, so half of the samples look smooth."""
    mu = getattr(model, "mu", None)
    if mu is None:
        return None
    return 1.0 / (1.0 + mu / np.min(mu))


def sample_ball(model: SplitFunctional, radius, n: int, rng,
                radial: str = "uniform") -> np.ndarray:
    """``n`` states with ‖z₁‖, ‖z₂‖ ≤ radius.

    Component radii are uniform on [0, radius] (``"uniform"``) or equal to
    radius (``"sphere"``).  Half the directions are drawn with weights
    favouring low modes.
    """
    z = np.zeros((model.dim, n))
    w = spectral_smoothing(model)
    for mask in (model.e1, model.e2):
        d = int(mask.sum())
        if d == 0:
            continue
        dirs = _random_directions(rng, d, n, None if w is None else w[mask])
        r = np.full(n, float(radius)) if radial == "sphere" else radius * rng.uniform(size=n)
        z[mask] = dirs * r
    return z


def in_ball(model: SplitFunctional, z, radius, slack: float = 0.0):
    n1, n2 = model.component_norms(z)
    return (n1 <= radius + slack) & (n2 <= radius + slack)


# ---------------------------------------------------------------------------
# constants of the deformation construction

def probe_uniform_differentiability(model: SplitFunctional, R: float, eps: float,
                                    n_samples: int = 64, seed: int = 0,
                                    min_delta: float = 1e-12) -> float:
    """Largest dyadic δ ≤ 1 with |B(u+v) − B(u) − B′(u)v| ≤ eps‖v‖ on samples.

    Pairs (u, u+v) are drawn in 𝓑_{R+2}; v is tested at lengths δ and δ/2.
    The base samples depend only on ``seed``, so a smaller ``eps`` never
    yields a larger δ.
    """
    if R <= 0 or eps <= 0:
        raise ValueError("R and eps must be positive")
    rng = np.random.default_rng(seed)
    r_out = R + 2.0
    base = sample_ball(model, 1.0, n_samples, rng)
    dirs = sample_ball(model, 1.0, n_samples, rng, radial="sphere")
    dirs /= np.linalg.norm(dirs, axis=0)
    delta = 1.0
    while delta >= min_delta:
        u = base * max(r_out - delta, 0.0)
        B0 = model.B(u)
        G0 = model.grad_B(u)
        ok = True
        for length in (delta, 0.5 * delta):
            v = dirs * length
            rem = np.abs(model.B(u + v) - B0 - np.sum(G0 * v, axis=0))
            if np.any(rem > eps * length):
                ok = False
                break
        if ok:
            return delta
        delta *= 0.5
    raise DifferentiabilityProbeError(
        f"no δ ≥ {min_delta:g} satisfies the differentiability bound for eps={eps:g}")


@dataclass(frozen=True)
class GradientBound:
    M: float
    sampled_max: float
    backstop: float
    n_samples: int
    seed: int


def estimate_gradient_bound(model: SplitFunctional, radius: float, n_samples: int = 200,
                            seed: int = 0, inflate: float = 2.0) -> GradientBound:
    """M with ‖I′‖ ≤ M on 𝓑_radius: sampled maximum times ``inflate``.

    The recorded backstop is √2·r·(1 + κ h_∞ / min μ) for energy models
    (from |f(s)| ≤ κ|s| and ‖u‖₂² ≤ ‖u‖²/min μ), and the model's own bound
    otherwise.
    """
    rng = np.random.default_rng(seed)
    z = np.concatenate([sample_ball(model, radius, n_samples // 2, rng),
                        sample_ball(model, radius, n_samples - n_samples // 2, rng,
                                    radial="sphere")], axis=1)
    g = np.linalg.norm(model.gradient(z), axis=0)
    sampled = float(g.max())
    if isinstance(model, EnergyModel):
        c2sq = 1.0 / float(np.min(model.mu))
        kappa = model.nonlinearity.kappa
        backstop = np.sqrt(2.0) * radius * (1.0 + kappa * model.h_values.max() * c2sq)
    else:
        backstop = float(model.gradient_bound(radius))
    return GradientBound(inflate * sampled, sampled, float(backstop), n_samples, seed)


# ---------------------------------------------------------------------------

class QuadraticModel(SplitFunctional):
    """I(z) = ½|z₁|² − ½|z₂|² + ⟨b, z⟩ on R^{d1} ⊕ R^{d2}.

    Its only critical point is z* = (−b₁, b₂) and ‖I′(z)‖ = |z − z*|, which
    gives an exact gradient floor on any set avoiding z*.
    """

    def __init__(self, d1: int, d2: int, b):
        b = np.asarray(b, dtype=float)
        if b.shape != (d1 + d2,):
            raise ValueError("b must have length d1 + d2")
        self.l_diag = np.concatenate([np.ones(d1), -np.ones(d2)])
        self.e1 = np.concatenate([np.ones(d1, bool), np.zeros(d2, bool)])
        self.b = b

    @property
    def critical_point(self) -> np.ndarray:
        return self.l_diag * -self.b

    def B(self, z):
        z = np.asarray(z, dtype=float)
        return np.tensordot(self.b, z, axes=(0, 0))

    def grad_B(self, z):
        z = np.asarray(z, dtype=float)
        return np.broadcast_to(_bcast(self.b, z), z.shape).copy()

    def gradient_floor(self, z):
        return np.linalg.norm(np.asarray(z) - _bcast(self.critical_point, np.asarray(z)), axis=0)

    def gradient_bound(self, radius):
        return np.sqrt(2.0) * radius + np.linalg.norm(self.b)


# ---------------------------------------------------------------------------

@dataclass
class CeramiDiagnostics:
    history: list = field(default_factory=list)

    def append(self, iteration: int, I: float, grad_norm: float, u_norm: float):
        if self.history and iteration <= self.history[-1][0]:
            raise ValueError("iterations must be strictly increasing")
        cer = (1.0 + u_norm) * grad_norm
        self.history.append((int(iteration), float(I), float(grad_norm), float(cer), float(u_norm)))

    def column(self, name: str) -> np.ndarray:
        j = ("iter", "I", "grad_norm", "cerami", "u_norm").index(name)
        return np.array([row[j] for row in self.history])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "I", "grad_norm", "cerami", "u_norm"])
            for it, I, g, c, n in self.history:
                w.writerow([it, f"{I:.15e}", f"{g:.15e}", f"{c:.15e}", f"{n:.15e}"])
