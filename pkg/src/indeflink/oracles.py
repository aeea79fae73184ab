"""Independent shooting check for even one-dimensional problems.

The discrete equations (−u_{i−1} + 2u_i − u_{i+1})/Δ² + V_i u_i = h_i f(u_i)
are marched outward from the centre of an even configuration, with the
central value as shooting parameter; roots of the terminal value (the
boundary node, which must vanish) are found by bisection-type root finding.
Every root is an exact solution of the same discrete system the minimax
solver works on, so agreement measures solver error, not discretization.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .energy import EnergyModel
from .errors import DimensionError, OracleInconclusive
from .grid import Field, l2_inner
from .nonlinearity import eval_f

CLIP = 1e6


@dataclass
class ShootingCandidate:
    amplitude: float          # central value u(0)
    field: Field
    residual: float           # induced dual norm of the discrete gradient


@dataclass
class ShootingResult:
    candidates: list

    def closest(self, u) -> tuple:
        """(candidate, relative L² distance) nearest to ±u."""
        uv = u.values if isinstance(u, Field) else np.asarray(u, float)
        best, dist = None, np.inf
        for c in self.candidates:
            g = c.field.grid
            nu = np.sqrt(l2_inner(g, uv, uv))
            for sgn in (1.0, -1.0):
                diff = sgn * c.field.values - uv
                d = np.sqrt(l2_inner(g, diff, diff)) / nu
                if d < dist:
                    best, dist = c, d
        return best, float(dist)


def _check_even(model: EnergyModel, tol=1e-12):
    g = model.grid
    if g.dim != 1 or g.spec.boundary != "dirichlet":
        raise DimensionError("the shooting oracle needs a one-dimensional Dirichlet grid")
    V = model.op.potential
    for name, arr in (("potential", V), ("weight", model.h_values)):
        if np.max(np.abs(arr - arr[::-1])) > tol * (1.0 + np.max(np.abs(arr))):
            raise DimensionError(f"the shooting oracle needs an even {name}")


def _march(model: EnergyModel, a: float, full: bool = False):
    n = model.grid.n_total
    d2 = model.grid.spacing ** 2
    V, h = model.op.potential, model.h_values
    spec = model.nonlinearity
    u = np.zeros(n + 2)           # ghost boundary nodes at 0 and n+1
    if n % 2 == 0:
        c = n // 2                # nodes c and c+1 straddle the centre
        u[c] = u[c + 1] = a
        start = c + 1
    else:
        c = (n + 1) // 2
        u[c] = a
        u[c + 1] = a - 0.5 * d2 * (h[c - 1] * float(eval_f(spec, a)) - V[c - 1] * a)
        start = c + 1
    for i in range(start, n + 1):
        nxt = 2.0 * u[i] - u[i - 1] + d2 * (V[i - 1] * u[i] - h[i - 1] * float(eval_f(spec, u[i])))
        if abs(nxt) > CLIP and not full:
            return float(np.sign(nxt) * CLIP)
        u[i + 1] = nxt
    if full:
        mid = n // 2 if n % 2 == 0 else (n + 1) // 2
        inner = u[1:n + 1]
        # mirror the computed half
        half = inner[mid:] if n % 2 == 0 else inner[mid - 1:]
        left = half[::-1] if n % 2 == 0 else half[:0:-1]
        return np.concatenate([left, half])
    return float(u[n + 1])


def shooting_oracle_1d(model: EnergyModel, a_max: float = 10.0, n_scan: int = 800,
                       xtol: float = 1e-15) -> ShootingResult:
    """All even solutions with central value in (0, a_max] found by the scan."""
    _check_even(model)
    A = np.linspace(a_max / n_scan, a_max, n_scan)
    vals = np.array([_march(model, a) for a in A])
    idx = np.flatnonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)
    if idx.size == 0:
        raise OracleInconclusive("the shooting map has no sign change on the scanned bracket")
    out = []
    for i in idx:
        a = brentq(lambda s: _march(model, s), A[i], A[i + 1], xtol=xtol, rtol=4 * np.finfo(float).eps)
        u = _march(model, a, full=True)
        res = model.induced_norm_of_euclidean(model.euclidean_grad(u))
        out.append(ShootingCandidate(float(a), Field(u, model.grid), float(res)))
    return ShootingResult(out)
