"""Asymptotically linear nonlinearities f, their primitives F and Q(s) = ½fs − F.

Built-in kinds:

``paper_example``
    s(s⁶ − 1.5s⁴ + 2s²)/(1 + s⁶) for |s| < 5, s³/(1 + s²) for |s| > 10 and a
    clamped cubic Hermite bridge in between; a = 1.
``rational_tail``
    a·s³/(1 + s²).
``user_table``
    odd extension of a PCHIP interpolant through (s_j, f_j), s_0 = 0,
    continued linearly through the origin beyond the last node.
``callable``
    arbitrary vectorized f (diagnostics and tests); F by quadrature when no
    primitive is supplied.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import PchipInterpolator

from .errors import ConfigurationError, ConstructionError, EvaluationError

KINDS = ("paper_example", "rational_tail", "user_table", "callable")
_SQRT3 = np.sqrt(3.0)
QUAD_TOL = 1e-10


# ---------------------------------------------------------------------------
# the built-in example, branch by branch (arguments are |s|)

def _inner_f(s):
    # in-place arithmetic: this sits in the innermost loop of the deformation
    s2 = s * s
    den = s2 * s2
    num = den - 1.5 * s2
    num += 2.0
    num *= s2
    num *= s
    den *= s2
    den += 1.0
    num /= den
    return num


def _inner_df(s):
    num = s**7 - 1.5 * s**5 + 2.0 * s**3
    dnum = 7.0 * s**6 - 7.5 * s**4 + 6.0 * s**2
    den = 1.0 + s**6
    return (dnum * den - num * 6.0 * s**5) / den**2


def _inner_F(s):
    # with X = s²: ∫ f = ½[X − 1.5 ln(1+X) + (atan((2X−1)/√3) + π/6)/√3]
    X = s * s
    closed = 0.5 * (X - 1.5 * np.log1p(X)
                    + (np.arctan((2.0 * X - 1.0) / _SQRT3) + np.pi / 6.0) / _SQRT3)
    small = X < 0.25
    if np.any(small):
        closed = np.where(small, _inner_F_series(np.where(small, X, 0.0)), closed)
    return closed


def _inner_F_series(X, terms=14):
    # the closed form cancels to O(X²) near 0; integrate the power series of
    # (2X − 1.5X² + X³)/(1 + X³) term by term instead
    total = np.zeros_like(X)
    for k in range(terms - 1, -1, -1):
        sgn = -1.0 if k % 2 else 1.0
        total = total + sgn * (2.0 * X ** (3 * k + 2) / (3 * k + 2)
                               - 1.5 * X ** (3 * k + 3) / (3 * k + 3)
                               + X ** (3 * k + 4) / (3 * k + 4))
    return 0.5 * total


def _outer_f(s):
    return s**3 / (1.0 + s * s)


def _outer_df(s):
    s2 = s * s
    return (3.0 * s2 * (1.0 + s2) - 2.0 * s2 * s2) / (1.0 + s2) ** 2


def _outer_G(s):
    return 0.5 * (s * s - np.log1p(s * s))


@dataclass(frozen=True)
class HermiteBridge:
    """Cubic on [left, right] matching values and slopes at both ends."""
    left: float
    right: float
    coeffs: tuple     # monomial coefficients in t = s − left, increasing degree

    @classmethod
    def clamped(cls, left, right, f_l, f_r, d_l, d_r):
        H = right - left
        c0, c1 = f_l, d_l
        c2 = (3.0 * (f_r - f_l) / H - 2.0 * d_l - d_r) / H
        c3 = (d_l + d_r - 2.0 * (f_r - f_l) / H) / H**2
        return cls(left, right, (c0, c1, c2, c3))

    def __call__(self, s):
        t = s - self.left
        c0, c1, c2, c3 = self.coeffs
        return c0 + t * (c1 + t * (c2 + t * c3))

    def derivative(self, s):
        t = s - self.left
        _, c1, c2, c3 = self.coeffs
        return c1 + t * (2.0 * c2 + t * 3.0 * c3)

    def integral(self, s):
        t = s - self.left
        c0, c1, c2, c3 = self.coeffs
        return t * (c0 + t * (c1 / 2.0 + t * (c2 / 3.0 + t * c3 / 4.0)))


class _ExampleBranches:
    def __init__(self, left: float, right: float):
        if not 0.0 < left < right:
            raise ConfigurationError("bridge edges must satisfy 0 < left < right")
        self.left, self.right = left, right
        self.bridge = HermiteBridge.clamped(
            left, right, _inner_f(left), _outer_f(right), _inner_df(left), _outer_df(right))
        self.F_left = _inner_F(left)
        self.F_right = self.F_left + self.bridge.integral(right)

    def f_abs(self, a):
        if np.max(a, initial=0.0) < self.left:
            return _inner_f(a)
        out = _inner_f(np.minimum(a, self.left))
        out = np.where(a >= self.left, self.bridge(np.clip(a, self.left, self.right)), out)
        return np.where(a > self.right, _outer_f(np.maximum(a, self.right)), out)

    def df_abs(self, a):
        out = _inner_df(np.minimum(a, self.left))
        out = np.where(a >= self.left, self.bridge.derivative(np.clip(a, self.left, self.right)), out)
        return np.where(a > self.right, _outer_df(np.maximum(a, self.right)), out)

    def F_abs(self, a):
        if np.max(a, initial=0.0) < self.left:
            return _inner_F(a)
        out = _inner_F(np.minimum(a, self.left))
        mid = self.F_left + self.bridge.integral(np.clip(a, self.left, self.right))
        out = np.where(a >= self.left, mid, out)
        tail = self.F_right + _outer_G(np.maximum(a, self.right)) - _outer_G(self.right)
        return np.where(a > self.right, tail, out)

    def verify(self):
        s = np.linspace(self.left, self.right, 2001)
        fb = self.bridge(s)
        if np.any(np.diff(fb) <= 0):
            raise ConstructionError("bridge of the example nonlinearity is not monotone")
        q = 0.5 * fb * s - self.F_abs(s)
        if np.any(q <= 0):
            raise ConstructionError(
                f"Q(s) = ½f(s)s − F(s) is not positive on the bridge (min {q.min():.3e})")


# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NonlinearitySpec:
    kind: str
    a_asymptote: float = 1.0
    kappa: float | None = None
    p_growth: float = 3.0
    bridge_params: tuple = (5.0, 10.0)
    table: tuple | None = None
    func: Callable | None = None
    antiderivative: Callable | None = None
    _impl: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown nonlinearity kind {self.kind!r}")
        if not self.p_growth > 2.0:
            raise ConfigurationError("p_growth must exceed 2")
        if self.kind == "paper_example":
            impl = _ExampleBranches(*map(float, self.bridge_params))
            impl.verify()
            object.__setattr__(self, "a_asymptote", 1.0)
        elif self.kind == "user_table":
            impl = _Table(self.table)
            object.__setattr__(self, "a_asymptote", impl.slope)
        elif self.kind == "callable":
            if self.func is None:
                raise ConfigurationError("callable nonlinearity needs func")
            impl = None
        else:
            impl = None
        object.__setattr__(self, "_impl", impl)
        if self.kind != "callable" and not self.a_asymptote > 0:
            raise ConfigurationError("a_asymptote must be positive")
        if self.kappa is None:
            object.__setattr__(self, "kappa", max(self.a_asymptote, 1.05 * sampled_ratio_sup(self)))
        if self.kappa < self.a_asymptote:
            raise ConfigurationError("kappa must be at least a_asymptote")

    # convenience constructors
    @classmethod
    def example(cls, **kw):
        return cls("paper_example", **kw)

    @classmethod
    def from_callable(cls, func, antiderivative=None, a_asymptote=0.0, **kw):
        return cls("callable", a_asymptote=a_asymptote, func=func,
                   antiderivative=antiderivative, **kw)

    @classmethod
    def zero(cls):
        return cls.from_callable(np.zeros_like, np.zeros_like, a_asymptote=0.0)

    def f(self, s):
        return eval_f(self, s)

    def F(self, s):
        return eval_F(self, s)

    def df(self, s):
        return eval_df(self, s)


class _Table:
    def __init__(self, table):
        if table is None:
            raise ConfigurationError("user_table nonlinearity needs table=(s_nodes, f_values)")
        s, v = (np.asarray(x, dtype=float) for x in table)
        if s.ndim != 1 or s.shape != v.shape or s.size < 2:
            raise ConfigurationError("table must be two equal-length 1D sequences")
        if s[0] != 0.0 or v[0] != 0.0 or np.any(np.diff(s) <= 0):
            raise ConfigurationError("table must start at (0, 0) with increasing s")
        self.s_max = float(s[-1])
        self.slope = float(v[-1] / s[-1])
        self.interp = PchipInterpolator(s, v)
        self.prim = self.interp.antiderivative()
        self.deriv = self.interp.derivative()
        self.F_max = float(self.prim(self.s_max))

    def f_abs(self, a):
        inside = self.interp(np.minimum(a, self.s_max))
        return np.where(a > self.s_max, self.slope * a, inside)

    def df_abs(self, a):
        return np.where(a > self.s_max, self.slope, self.deriv(np.minimum(a, self.s_max)))

    def F_abs(self, a):
        inside = self.prim(np.minimum(a, self.s_max))
        tail = self.F_max + 0.5 * self.slope * (a * a - self.s_max**2)
        return np.where(a > self.s_max, tail, inside)


def _as_float(s):
    # keep the floating dtype of the input
    s = np.asarray(s)
    return s if np.issubdtype(s.dtype, np.floating) else s.astype(float)


def eval_f(spec: NonlinearitySpec, s):
    s = _as_float(s)
    if spec.kind == "callable":
        return np.asarray(spec.func(s), dtype=float)
    if spec.kind == "rational_tail":
        return spec.a_asymptote * s**3 / (1.0 + s * s)
    if spec.kind == "paper_example":
        # the built-in branches are odd polynomial-rational in s below the bridge
        if np.max(np.abs(s), initial=0.0) < spec._impl.left:
            return _inner_f(s)
    return np.sign(s) * spec._impl.f_abs(np.abs(s))


def eval_df(spec: NonlinearitySpec, s):
    """f′(s); central differences for the callable kind."""
    s = np.asarray(s, dtype=float)
    if spec.kind == "callable":
        step = 1e-6 * np.maximum(1.0, np.abs(s))
        return (eval_f(spec, s + step) - eval_f(spec, s - step)) / (2.0 * step)
    if spec.kind == "rational_tail":
        return spec.a_asymptote * _outer_df(s)
    # f′ of an odd f is even
    return spec._impl.df_abs(np.abs(s))


def eval_F(spec: NonlinearitySpec, s):
    s = _as_float(s)
    if spec.kind == "callable":
        if spec.antiderivative is not None:
            return np.asarray(spec.antiderivative(s), dtype=float)
        return _quad_primitive(spec.func, s)
    if spec.kind == "rational_tail":
        return spec.a_asymptote * 0.5 * (s * s - np.log1p(s * s))
    # odd f has an even primitive
    return spec._impl.F_abs(np.abs(s))


def _quad_primitive(func, s):
    def one(x):
        if x == 0.0:
            return 0.0
        val, err = quad(lambda t: float(func(np.asarray(t))), 0.0, x,
                        epsabs=QUAD_TOL, epsrel=1e-12, limit=200)
        if err > 10 * QUAD_TOL + 1e-12 * abs(val):
            raise EvaluationError(f"quadrature of f on [0, {x:g}] failed (error {err:.2e})")
        return val
    return np.vectorize(one, otypes=[float])(s)


def eval_Qfun(spec: NonlinearitySpec, s):
    s = np.asarray(s, dtype=float)
    return 0.5 * eval_f(spec, s) * s - eval_F(spec, s)


def _log_samples(lo=1e-6, hi=1e6, n=1201):
    pos = np.geomspace(lo, hi, n)
    return np.concatenate([-pos[::-1], pos])


def sampled_ratio_sup(spec: NonlinearitySpec, hi: float = 1e6) -> float:
    s = _log_samples(hi=hi)
    return float(np.max(np.abs(eval_f(spec, s) / s)))


@dataclass(frozen=True)
class HypothesisReport:
    f1_ratio_near_zero: float
    f1_pass: bool
    F_min: float
    f2_limit_estimate: float
    f2_pass: bool
    Q_min_window: float
    Q_growth: tuple           # (Q(10), Q(100))
    f3_pass: bool
    kappa_sampled: float
    kappa_bounded: bool
    epsilon: float
    C_eps: float
    checked_range: tuple
    abstained_beyond: float | None

    @property
    def passed(self) -> bool:
        return self.f1_pass and self.f2_pass and self.f3_pass and self.kappa_bounded

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__} | {"passed": self.passed}


def check_hypotheses(spec: NonlinearitySpec, epsilon: float = 0.1,
                     s_max: float = 1e6) -> HypothesisReport:
    """Sample the growth, sign and limit conditions on f; never raises."""
    abstain = None
    if spec.kind == "user_table":
        abstain = spec._impl.s_max
        s_max = min(s_max, abstain)
    near = np.concatenate([-np.geomspace(1e-8, 1e-4, 50), np.geomspace(1e-8, 1e-4, 50)])
    r0 = float(np.max(np.abs(eval_f(spec, near) / near)))
    f1 = bool(r0 <= 1e-3)

    s = _log_samples(hi=s_max)
    F = eval_F(spec, s)
    F_min = float(F.min())
    # the limit is read off far out; table kinds are defined there by their
    # linear continuation
    big = 1e6
    limit = float(2.0 * eval_F(spec, big) / big**2)
    a = spec.a_asymptote
    f2 = bool(F_min >= 0 and abs(limit - a) <= 1e-3 * max(a, 1.0) and a > 0)

    window = np.linspace(-50.0, 50.0, 1000)   # even count: 0 is not a node
    window = window[np.abs(window) <= s_max]
    q_win = eval_Qfun(spec, window)
    q_log = eval_Qfun(spec, s)
    q10, q100 = (float(eval_Qfun(spec, x)) if x <= s_max else np.nan for x in (10.0, 100.0))
    f3 = bool(np.all(q_win > 0) and np.all(q_log > 0)
              and (np.isnan(q100) or q100 > q10 > 0))

    ratio = np.abs(eval_f(spec, s) / s)
    pos = np.abs(s)
    mid = ratio[(pos >= 1.0) & (pos <= np.sqrt(s_max))]
    tail = ratio[pos >= np.sqrt(s_max)]
    kappa_sampled = float(ratio.max())
    bounded = bool(mid.size == 0 or tail.max() <= 1.5 * max(mid.max(), 1e-300))

    p = spec.p_growth
    C = np.max(p * (np.abs(F) - 0.5 * epsilon * s * s) / np.abs(s) ** p)
    return HypothesisReport(
        f1_ratio_near_zero=r0, f1_pass=f1, F_min=F_min, f2_limit_estimate=limit,
        f2_pass=f2, Q_min_window=float(min(q_win.min(), q_log.min())),
        Q_growth=(q10, q100), f3_pass=f3, kappa_sampled=kappa_sampled,
        kappa_bounded=bounded, epsilon=epsilon, C_eps=float(max(C, 0.0)),
        checked_range=(1e-6, float(s_max)), abstained_beyond=abstain)
