"""Multiprecision evaluation of the nodal equations w(Au − h f(u)) = 0.

Used to certify critical points: the Newton iterate is kept as mpmath
numbers, residuals are exact to far below double rounding, and only the
sparse linear solves run in double (corrected by iterative refinement).
f is evaluated branch by branch with the same formulas as the double
implementation for the built-in kinds; other kinds fall back to double f.
"""
from __future__ import annotations

import mpmath
import numpy as np

from .energy import EnergyModel
from .nonlinearity import (NonlinearitySpec, _inner_df, _inner_f, _outer_df, _outer_f,
                           eval_df, eval_f)

DPS = 60


def _mp_branches(spec: NonlinearitySpec):
    """(f, f′) on single mpf arguments, or None when only double f exists."""
    if spec.kind == "paper_example":
        impl = spec._impl
        left, right, bridge = impl.left, impl.right, impl.bridge

        def f(s):
            a = abs(s)
            v = _inner_f(a) if a < left else (bridge(a) if a <= right else _outer_f(a))
            return v if s >= 0 else -v

        def df(s):
            a = abs(s)
            return (_inner_df(a) if a < left
                    else bridge.derivative(a) if a <= right else _outer_df(a))
        return f, df
    if spec.kind == "rational_tail":
        amp = mpmath.mpf(spec.a_asymptote)
        return (lambda s: amp * s**3 / (1 + s * s)), (lambda s: amp * _outer_df(s))
    return None


class PreciseSystem:
    """The nodal gradient and Hessian action of an energy model in mpmath."""

    def __init__(self, model: EnergyModel, dps: int = DPS):
        self.model = model
        self.dps = dps
        A = model.op.matrix.tocsr()
        with mpmath.workdps(dps):
            self.rows = [(A.indices[a:b].tolist(), [mpmath.mpf(x) for x in A.data[a:b]])
                         for a, b in zip(A.indptr[:-1], A.indptr[1:])]
            self.w = [mpmath.mpf(x) for x in model.quad_weights]
            self.wh = [wi * mpmath.mpf(hi) for wi, hi in zip(self.w, model.h_values)]
        self.branches = _mp_branches(model.nonlinearity)

    @property
    def exact_f(self) -> bool:
        return self.branches is not None

    # conversions -----------------------------------------------------------
    def lift(self, u) -> list:
        with mpmath.workdps(self.dps):
            return [mpmath.mpf(float(x)) for x in np.asarray(u, dtype=float)]

    @staticmethod
    def lower(v) -> np.ndarray:
        return np.array([float(x) for x in v])

    # evaluations -----------------------------------------------------------
    def _f(self, u):
        if self.branches is None:
            return [mpmath.mpf(x) for x in eval_f(self.model.nonlinearity, self.lower(u))]
        f = self.branches[0]
        return [f(x) for x in u]

    def _df(self, u):
        if self.branches is None:
            return [mpmath.mpf(x) for x in eval_df(self.model.nonlinearity, self.lower(u))]
        df = self.branches[1]
        return [df(x) for x in u]

    def _matvec(self, v):
        return [mpmath.fsum(a * v[j] for j, a in zip(idx, dat)) for idx, dat in self.rows]

    def gradient(self, u) -> list:
        """w(Au − h f(u)), entry by entry."""
        with mpmath.workdps(self.dps):
            Au = self._matvec(u)
            fu = self._f(u)
            return [w * a - wh * f for w, a, wh, f in zip(self.w, Au, self.wh, fu)]

    def hessian_apply(self, u, d) -> list:
        with mpmath.workdps(self.dps):
            Ad = self._matvec(d)
            dfu = self._df(u)
            return [w * a - wh * q * x for w, a, wh, q, x in zip(self.w, Ad, self.wh, dfu, d)]

    def residual(self, u) -> float:
        """Induced dual norm of the gradient at u."""
        return self.model.induced_norm_of_euclidean(self.lower(self.gradient(u)))
