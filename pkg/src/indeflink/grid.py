"""Truncated-domain grids, potentials, weights and the discrete Schrödinger operator.

The whole space is replaced by the box [-L, L]^d with either homogeneous
Dirichlet conditions (boundary nodes dropped) or periodic wrap-around.
Functions on the grid are plain node-value vectors; row-major ordering with
``indexing="ij"`` is used in two dimensions.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, ConfigurationError, DimensionError

BOUNDARIES = ("dirichlet", "periodic")
MIN_POINTS = 3

# first zero of J0, squared: Dirichlet ground state of the unit disk
_J01_SQ = 2.404825557695773**2


@dataclass(frozen=True)
class GridSpec:
    dim: int = 1
    half_width: float = 12.0
    n_per_axis: int = 256
    boundary: str = "dirichlet"

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ConfigurationError(f"dim must be 1 or 2, got {self.dim}")
        if int(self.n_per_axis) != self.n_per_axis or self.n_per_axis < MIN_POINTS:
            raise ConfigurationError(
                f"n_per_axis must be an integer >= {MIN_POINTS}, got {self.n_per_axis}")
        if not self.half_width > 0:
            raise ConfigurationError("half_width must be positive")
        if self.boundary not in BOUNDARIES:
            raise ConfigurationError(f"boundary must be one of {BOUNDARIES}")

    @property
    def spacing(self) -> float:
        if self.boundary == "dirichlet":
            return 2.0 * self.half_width / (self.n_per_axis + 1)
        return 2.0 * self.half_width / self.n_per_axis

    @property
    def n_total(self) -> int:
        return self.n_per_axis**self.dim


@dataclass(frozen=True, eq=False)
class Grid:
    spec: GridSpec
    axis: np.ndarray
    coords: np.ndarray
    weights: np.ndarray

    @property
    def spacing(self) -> float:
        return self.spec.spacing

    @property
    def dim(self) -> int:
        return self.spec.dim

    @property
    def n_total(self) -> int:
        return self.coords.shape[0]

    @property
    def shape(self) -> tuple:
        return (self.spec.n_per_axis,) * self.spec.dim

    @property
    def radius(self) -> np.ndarray:
        return np.linalg.norm(self.coords, axis=1)

    def compatible(self, other: "Grid") -> bool:
        return other is self or other.spec == self.spec


def build_grid(spec: GridSpec) -> Grid:
    n, h, L = spec.n_per_axis, spec.spacing, spec.half_width
    if spec.boundary == "dirichlet":
        axis = -L + h * np.arange(1, n + 1)
    else:
        axis = -L + h * np.arange(n)
    if spec.dim == 1:
        coords = axis[:, None].copy()
    else:
        X, Y = np.meshgrid(axis, axis, indexing="ij")
        coords = np.column_stack([X.ravel(), Y.ravel()])
    weights = np.full(coords.shape[0], h**spec.dim)
    for arr in (axis, coords, weights):
        arr.setflags(write=False)
    return Grid(spec, axis, coords, weights)


def covered_volume(spec: GridSpec) -> float:
    """Total quadrature volume: the box for periodic grids, the box minus the
    half-cells at the (excluded) boundary nodes for Dirichlet grids."""
    return (spec.n_per_axis * spec.spacing) ** spec.dim


# ---------------------------------------------------------------------------
# potentials and weights

def smoothstep5(y):
    """C² ramp 0 -> 1 on [0, 1]."""
    y = np.clip(y, 0.0, 1.0)
    return y**3 * (10.0 - 15.0 * y + 6.0 * y * y)


def unit_well_ground_energy(dim: int, spacing: float | None = None) -> float:
    """Lowest Dirichlet eigenvalue of -Δ on the unit ball.

    In 1D with ``spacing`` given this is the discrete value of the 3-point
    Laplacian on (-1, 1); otherwise the continuum value.
    """
    if dim == 1:
        if spacing is None:
            return np.pi**2 / 4.0
        return 4.0 / spacing**2 * np.sin(np.pi * spacing / 4.0) ** 2
    if dim == 2:
        return _J01_SQ
    raise ConfigurationError(f"unsupported dimension {dim}")


POTENTIAL_KINDS = ("step_well", "periodic_cosine", "constant", "tabulated")


@dataclass(frozen=True)
class PotentialSpec:
    kind: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in POTENTIAL_KINDS:
            raise ConfigurationError(f"unknown potential kind {self.kind!r}")
        p = dict(self.params)
        object.__setattr__(self, "params", p)
        if self.kind == "step_well":
            R, vinf = p.get("R", 1.0), p.get("V_inf", 1.0)
            if not (R > 0 and vinf > 0):
                raise ConfigurationError("step_well needs R > 0 and V_inf > 0")
            if "V0" in p:
                if not p["V0"] > 0:
                    raise ConfigurationError("step_well needs V0 > 0")
            elif not p.get("depth_ratio", 0) > 0:
                raise ConfigurationError("step_well needs V0 or a positive depth_ratio")
        elif self.kind == "constant":
            if "value" not in p:
                raise ConfigurationError("constant potential needs 'value'")
        elif self.kind == "tabulated":
            if "values" not in p:
                raise ConfigurationError("tabulated potential needs 'values'")

    def well_depth(self, grid: Grid) -> float:
        """V0 for the step well; from depth_ratio * λ₁(1)/R² if not given."""
        p = self.params
        if "V0" in p:
            return float(p["V0"])
        lam1 = unit_well_ground_energy(grid.dim, grid.spacing if grid.dim == 1 else None)
        return float(p["depth_ratio"]) * lam1 / float(p.get("R", 1.0)) ** 2


def evaluate_potential(grid: Grid, pot: PotentialSpec) -> np.ndarray:
    p = pot.params
    if pot.kind == "step_well":
        R, vinf = float(p.get("R", 1.0)), float(p.get("V_inf", 1.0))
        v0 = pot.well_depth(grid)
        r = grid.radius
        return -v0 + (vinf + v0) * smoothstep5((r - R) / R)
    if pot.kind == "periodic_cosine":
        _check_period(grid.spec)
        amp, mean = float(p.get("amplitude", 1.0)), float(p.get("mean", 0.0))
        return mean + amp * np.cos(grid.coords).sum(axis=1)
    if pot.kind == "constant":
        return np.full(grid.n_total, float(p["value"]))
    values = np.asarray(p["values"], dtype=float).ravel()
    if values.size != grid.n_total:
        raise DimensionError(
            f"tabulated potential has {values.size} values, grid has {grid.n_total}")
    return values.copy()


def _check_period(spec: GridSpec):
    if spec.boundary != "periodic":
        raise ConfigurationError("periodic_cosine requires a periodic grid")
    cells = 2.0 * spec.half_width / (2.0 * np.pi)
    if abs(cells - round(cells)) > 1e-9 or round(cells) < 1:
        raise ConfigurationError(
            "periodic_cosine needs 2L to be an integer multiple of 2π")


WEIGHT_KINDS = ("gaussian", "rational_decay", "constant_on_box")


@dataclass(frozen=True)
class WeightSpec:
    kind: str
    params: Mapping = field(default_factory=dict)
    p_exponent: float = 3.0
    critical_exponent: float = 6.0
    h_inf: float | None = None

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise ConfigurationError(f"unknown weight kind {self.kind!r}")
        object.__setattr__(self, "params", dict(self.params))
        if not 2.0 < self.p_exponent < self.critical_exponent:
            raise ConfigurationError("p_exponent must lie in (2, critical_exponent)")
        if self.params.get("amplitude", 1.0) <= 0:
            raise ConfigurationError("weight amplitude must be positive")

    @property
    def q_exponent(self) -> float:
        c = self.critical_exponent
        return c / (c - self.p_exponent)

    def bind(self, grid: Grid) -> "WeightSpec":
        """Copy with ``h_inf`` set to the maximum over ``grid``."""
        return replace(self, h_inf=float(evaluate_weight(grid, self).max()))


def evaluate_weight(grid: Grid, spec: WeightSpec) -> np.ndarray:
    p = spec.params
    amp = float(p.get("amplitude", 1.0))
    center = np.broadcast_to(np.asarray(p.get("center", 0.0), dtype=float), (grid.dim,))
    radius = np.linalg.norm(grid.coords - center, axis=1)
    if spec.kind == "gaussian":
        width = float(p.get("width", 1.0))
        h = amp * np.exp(-radius**2 / (2.0 * width**2))
    elif spec.kind == "rational_decay":
        width, power = float(p.get("width", 1.0)), float(p.get("power", 2.0))
        h = amp / (1.0 + (radius / width) ** 2) ** power
    else:
        half = float(p.get("half_side", 1.0))
        floor = float(p.get("floor", 1e-3 * amp))
        inside = np.max(np.abs(grid.coords), axis=1) <= half
        h = np.where(inside, amp, floor)
    if not np.all(np.isfinite(h)) or np.any(h <= 0):
        raise AssemblyError("weight must be finite and strictly positive on the grid")
    return h


# ---------------------------------------------------------------------------
# fields and the operator

@dataclass(frozen=True, eq=False)
class Field:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_total,):
            raise DimensionError(
                f"field of shape {v.shape} on a grid of {self.grid.n_total} nodes")
        if not np.all(np.isfinite(v)):
            raise DimensionError("field has non-finite entries")
        object.__setattr__(self, "values", v)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def l2_norm(self) -> float:
        return float(np.sqrt(l2_inner(self.grid, self, self)))

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def to_csv(self, path):
        write_field_csv(path, self.grid, self.values)


def _values(grid: Grid, u) -> np.ndarray:
    if isinstance(u, Field):
        if not grid.compatible(u.grid):
            raise DimensionError("field lives on a different grid")
        return u.values
    u = np.asarray(u, dtype=float)
    if u.shape[0] != grid.n_total:
        raise DimensionError(f"vector of length {u.shape[0]} on a grid of {grid.n_total} nodes")
    return u


def l2_inner(grid: Grid, u, v) -> float:
    a, b = _values(grid, u), _values(grid, v)
    return float(np.sum(grid.weights * a * b))


def write_field_csv(path, grid: Grid, values):
    names = ["x", "y"][: grid.dim]
    values = np.asarray(values, dtype=float)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["value"])
        for c, v in zip(grid.coords, values):
            w.writerow([f"{x:.12e}" for x in c] + [f"{v:.15e}"])


def _laplacian_1d(n: int, h: float, periodic: bool) -> sp.csr_matrix:
    main = np.full(n, 2.0 / h**2)
    off = np.full(n - 1, -1.0 / h**2)
    m = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if periodic:
        m[0, n - 1] += -1.0 / h**2
        m[n - 1, 0] += -1.0 / h**2
    return m.tocsr()


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    matrix: sp.csr_matrix
    quad_weights: np.ndarray
    grid: Grid
    potential: np.ndarray

    def apply(self, u):
        return self.matrix @ _values(self.grid, u)

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()


def laplacian(grid: Grid) -> sp.csr_matrix:
    spec = grid.spec
    lap = _laplacian_1d(spec.n_per_axis, spec.spacing, spec.boundary == "periodic")
    if spec.dim == 2:
        eye = sp.identity(spec.n_per_axis, format="csr")
        lap = (sp.kron(lap, eye) + sp.kron(eye, lap)).tocsr()
    return lap


def assemble_operator(grid: Grid, pot: PotentialSpec) -> DiscreteOperator:
    V = evaluate_potential(grid, pot)
    if not np.all(np.isfinite(V)):
        raise AssemblyError("potential is not finite on every node")
    M = (laplacian(grid) + sp.diags(V)).tocsr()
    M.sort_indices()
    return DiscreteOperator(M, grid.weights, grid, V)
