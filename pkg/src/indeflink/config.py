"""Problem configuration: presets, file parsing and validation.

A configuration file (YAML, or JSON by extension) is a tree::

    scenario: t1 | t2_periodic | custom
    grid:         {dim, half_width, n_per_axis, boundary}
    potential:    {kind, params: {...}}
    weight:       {kind, params: {...}, p_exponent, critical_exponent}
    nonlinearity: {kind, a_asymptote, kappa, p_growth, bridge_params, table: {s, f}}
    solver:       {tol, max_stages, n_starts, seed, shrink, newton_tol, variant,
                   calibration_samples}

With a preset scenario every section is optional and overrides the preset
field by field; ``custom`` needs grid, potential, weight and nonlinearity.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigParseError, ConfigurationError
from .grid import GridSpec, PotentialSpec, WeightSpec
from .nonlinearity import NonlinearitySpec

SCENARIOS = ("t1", "t2_periodic", "custom")

POTENTIAL_PARAMS = {
    "step_well": {"V0", "depth_ratio", "R", "V_inf"},
    "periodic_cosine": {"amplitude", "mean"},
    "constant": {"value"},
    "tabulated": {"values"},
}
WEIGHT_PARAMS = {
    "gaussian": {"amplitude", "width", "center"},
    "rational_decay": {"amplitude", "width", "power", "center"},
    "constant_on_box": {"amplitude", "half_side", "floor"},
}

# key -> (type, required in custom)
SCHEMA = {
    "grid": {"dim": (int, True), "half_width": (float, True), "n_per_axis": (int, True),
             "boundary": (str, True)},
    "potential": {"kind": (str, True), "params": (dict, True)},
    "weight": {"kind": (str, True), "params": (dict, True), "p_exponent": (float, False),
               "critical_exponent": (float, False)},
    "nonlinearity": {"kind": (str, True), "a_asymptote": (float, False),
                     "kappa": (float, False), "p_growth": (float, False),
                     "bridge_params": (list, False), "table": (dict, False)},
    "solver": {"tol": (float, False), "max_stages": (int, False), "n_starts": (int, False),
               "seed": (int, False), "shrink": (float, False), "newton_tol": (float, False),
               "variant": (str, False), "calibration_samples": (int, False)},
}
REQUIRED_SECTIONS = ("grid", "potential", "weight", "nonlinearity")


@dataclass
class SolverSettings:
    tol: float = 1e-8
    max_stages: int = 200
    n_starts: int = 8
    seed: int = 0
    shrink: float = 0.5
    newton_tol: float = 1e-12
    variant: str = "box"
    calibration_samples: int = 256


@dataclass
class ProblemConfig:
    scenario: str
    grid: GridSpec
    potential: PotentialSpec
    weight: WeightSpec
    nonlinearity: NonlinearitySpec
    solver: SolverSettings
    raw: dict

    def to_dict(self) -> dict:
        """The fully resolved tree (defaults included), as echoed in reports."""
        return copy.deepcopy(self.raw)


# ---------------------------------------------------------------------------
# presets

def preset_tree(name: str, dim: int = 1, n: int | None = None) -> dict:
    if name == "t1":
        return {
            "scenario": "t1",
            "grid": {"dim": dim, "half_width": 12.0, "n_per_axis": n or (256 if dim == 1 else 48),
                     "boundary": "dirichlet"},
            "potential": {"kind": "step_well",
                          "params": {"depth_ratio": 2.0, "R": 1.0, "V_inf": 1.0}},
            "weight": {"kind": "gaussian", "params": {"amplitude": 2.0, "width": 1.0},
                       "p_exponent": 3.0, "critical_exponent": 6.0},
            "nonlinearity": {"kind": "paper_example"},
            "solver": _solver_tree(variant="box"),
        }
    if name == "t2_periodic":
        return {
            "scenario": "t2_periodic",
            "grid": {"dim": dim, "half_width": float(4 * np.pi),
                     "n_per_axis": n or (256 if dim == 1 else 48), "boundary": "periodic"},
            "potential": {"kind": "periodic_cosine", "params": {"amplitude": 1.0, "mean": 0.0}},
            "weight": {"kind": "gaussian",
                       "params": {"amplitude": 3.0, "width": 1.0, "center": 1.0},
                       "p_exponent": 3.0, "critical_exponent": 6.0},
            "nonlinearity": {"kind": "paper_example"},
            "solver": _solver_tree(variant="ball"),
        }
    raise ConfigParseError("scenario", f"unknown preset {name!r}")


def _solver_tree(**kw) -> dict:
    base = SolverSettings(**kw)
    return dict(vars(base))


def preset(name: str, dim: int = 1, n: int | None = None) -> ProblemConfig:
    return build_config(preset_tree(name, dim, n))


# ---------------------------------------------------------------------------
# validation

def _check_type(path: str, value, kind):
    if kind is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    elif kind is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    else:
        ok = isinstance(value, kind)
    if not ok:
        raise ConfigParseError(path, f"expected {kind.__name__}, got {type(value).__name__}")


def _check_section(name: str, tree: dict, require_all: bool):
    if not isinstance(tree, dict):
        raise ConfigParseError(name, "expected a mapping")
    schema = SCHEMA[name]
    for key in tree:
        if key not in schema:
            raise ConfigParseError(f"{name}.{key}", "unknown key")
    for key, (kind, required) in schema.items():
        if key in tree:
            _check_type(f"{name}.{key}", tree[key], kind)
        elif require_all and required:
            raise ConfigParseError(f"{name}.{key}", "missing required key")


def _check_params(name: str, kind: str, params: dict, allowed: dict):
    if kind not in allowed:
        raise ConfigParseError(f"{name}.kind", f"unknown kind {kind!r}")
    for key, val in params.items():
        path = f"{name}.params.{key}"
        if key not in allowed[kind]:
            raise ConfigParseError(path, "unknown key")
        if key == "values":
            if not isinstance(val, list):
                raise ConfigParseError(path, "expected a list")
        elif key == "center":
            if not (isinstance(val, list) or isinstance(val, (int, float))):
                raise ConfigParseError(path, "expected a number or a list")
        else:
            _check_type(path, val, float)


def _merge(base: dict, over: dict) -> dict:
    """Section-wise override; a section switching ``kind`` starts afresh."""
    out = copy.deepcopy(base)
    for key, val in over.items():
        if key in SCHEMA and isinstance(val, dict) and isinstance(out.get(key), dict):
            section = out[key]
            if "kind" in val and val["kind"] != section.get("kind"):
                section = {}
            merged = {**section, **copy.deepcopy(val)}
            if isinstance(section.get("params"), dict) and isinstance(val.get("params"), dict):
                merged["params"] = {**section["params"], **val["params"]}
            out[key] = merged
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve_tree(tree: dict) -> dict:
    """Validate a raw tree and fill it from its preset."""
    if not isinstance(tree, dict):
        raise ConfigParseError("<root>", "expected a mapping at the top level")
    for key in tree:
        if key != "scenario" and key not in SCHEMA:
            raise ConfigParseError(key, "unknown key")
    scenario = tree.get("scenario", "custom")
    if scenario not in SCENARIOS:
        raise ConfigParseError("scenario", f"must be one of {SCENARIOS}")
    custom = scenario == "custom"
    for name in SCHEMA:
        if name in tree:
            _check_section(name, tree[name], require_all=custom and name in REQUIRED_SECTIONS)
        elif custom and name in REQUIRED_SECTIONS:
            raise ConfigParseError(name, "missing required section")
    if custom:
        full = {"scenario": "custom", "solver": _solver_tree()}
        full = _merge(full, tree)
    else:
        grid = tree.get("grid", {})
        base = preset_tree(scenario, dim=grid.get("dim", 1), n=grid.get("n_per_axis"))
        full = _merge(base, tree)
    return full


def build_config(full: dict) -> ProblemConfig:
    """Turn a resolved tree into specs, mapping construction errors to key paths."""
    for name in SCHEMA:
        _check_section(name, full.get(name, {}), require_all=False)
    g = full["grid"]
    if g["n_per_axis"] <= 0:
        raise ConfigParseError("grid.n_per_axis", "must be positive")
    try:
        grid = GridSpec(int(g["dim"]), float(g["half_width"]), int(g["n_per_axis"]),
                        g["boundary"])
    except ConfigurationError as exc:
        raise ConfigParseError("grid", str(exc)) from exc

    p = full["potential"]
    _check_params("potential", p["kind"], p.get("params", {}), POTENTIAL_PARAMS)
    try:
        potential = PotentialSpec(p["kind"], p.get("params", {}))
    except ConfigurationError as exc:
        raise ConfigParseError("potential", str(exc)) from exc

    w = full["weight"]
    _check_params("weight", w["kind"], w.get("params", {}), WEIGHT_PARAMS)
    try:
        weight = WeightSpec(w["kind"], w.get("params", {}),
                            p_exponent=float(w.get("p_exponent", 3.0)),
                            critical_exponent=float(w.get("critical_exponent", 6.0)))
    except ConfigurationError as exc:
        raise ConfigParseError("weight", str(exc)) from exc

    nl = full["nonlinearity"]
    kw = {}
    for key in ("a_asymptote", "kappa", "p_growth"):
        if key in nl:
            kw[key] = float(nl[key])
    if "bridge_params" in nl:
        kw["bridge_params"] = tuple(float(x) for x in nl["bridge_params"])
    if "table" in nl:
        t = nl["table"]
        if set(t) != {"s", "f"}:
            raise ConfigParseError("nonlinearity.table", "expected exactly the keys s and f")
        kw["table"] = (list(t["s"]), list(t["f"]))
    if nl["kind"] == "callable":
        raise ConfigParseError("nonlinearity.kind", "callable nonlinearities are API-only")
    try:
        nonlin = NonlinearitySpec(nl["kind"], **kw)
    except ConfigurationError as exc:
        raise ConfigParseError("nonlinearity", str(exc)) from exc
    if "a_asymptote" in kw and abs(kw["a_asymptote"] - nonlin.a_asymptote) > 1e-12:
        raise ConfigParseError("nonlinearity.a_asymptote",
                               f"kind {nl['kind']!r} fixes the slope at infinity to "
                               f"{nonlin.a_asymptote:g}")

    s = {**_solver_tree(), **full.get("solver", {})}
    if s["variant"] not in ("box", "ball"):
        raise ConfigParseError("solver.variant", "must be 'box' or 'ball'")
    if not s["tol"] > 0:
        raise ConfigParseError("solver.tol", "must be positive")
    if s["max_stages"] < 0:
        raise ConfigParseError("solver.max_stages", "must be non-negative")
    if s["n_starts"] < 1:
        raise ConfigParseError("solver.n_starts", "must be at least 1")
    if not 0 < s["shrink"] < 1:
        raise ConfigParseError("solver.shrink", "must lie in (0, 1)")
    solver = SolverSettings(**s)
    full = {**full, "solver": s}
    return ProblemConfig(full.get("scenario", "custom"), grid, potential, weight, nonlin,
                         solver, full)


def load_tree(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigParseError("<file>", f"{path} does not exist")
    text = path.read_text()
    try:
        tree = json.loads(text) if path.suffix.lower() == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigParseError("<file>", f"malformed document: {exc}") from exc
    return {} if tree is None else tree


def parse_config(path) -> ProblemConfig:
    return build_config(resolve_tree(load_tree(path)))


def with_overrides(cfg: ProblemConfig, **over) -> ProblemConfig:
    """Re-resolve with CLI-style overrides: dim, n, seed, tol, max_stages."""
    tree = cfg.to_dict()
    if over.get("dim") is not None and over["dim"] != tree["grid"]["dim"]:
        if cfg.scenario == "custom":
            tree["grid"]["dim"] = over["dim"]
        else:
            fresh = preset_tree(cfg.scenario, dim=over["dim"])
            tree["grid"] = {**tree["grid"], "dim": over["dim"],
                            "n_per_axis": fresh["grid"]["n_per_axis"]}
    if over.get("n") is not None:
        tree["grid"]["n_per_axis"] = over["n"]
    for key in ("seed", "tol", "max_stages"):
        if over.get(key) is not None:
            tree["solver"][key] = over[key]
    return build_config(tree)
