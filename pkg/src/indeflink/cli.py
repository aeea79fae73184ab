"""Command line driver: assemble, split, check, calibrate, solve, report.

Artifacts written to the output directory:

report.json            configuration echo, spectral data, hypothesis ledger,
                       linking frame, solve summary and exit status
spectral_report.txt    eigenvalue table and a₀
solution.csv           coordinates and value of u* (after a solve)
residual_history.csv   Cerami diagnostics per stage (after a solve)
stages.csv             per-stage records (with --emit-trace)

Exit codes: 0 converged (or checks passed with --check-only), 2 stage budget
exhausted, 1 hypothesis failure or any error.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SCENARIOS, ProblemConfig, parse_config, preset, with_overrides
from .energy import EnergyModel
from .errors import HypothesisViolation, IndeflinkError
from .grid import assemble_operator, build_grid, evaluate_weight
from .linking import LinkingFrame, calibrate_frame, choose_e, linking_margin
from .minimax import SolveReport, SolverOptions, solve, spectral_content
from .nonlinearity import HypothesisReport, check_hypotheses
from .spectral import SpectralSplit, ThresholdReport, compute_a0, eigendecompose, spectral_report

EXIT_OK, EXIT_ERROR, EXIT_NONCONVERGED = 0, 1, 2


@dataclass
class Problem:
    config: ProblemConfig
    model: EnergyModel
    split: SpectralSplit
    threshold: ThresholdReport
    hypotheses: HypothesisReport


def build_problem(cfg: ProblemConfig) -> Problem:
    grid = build_grid(cfg.grid)
    op = assemble_operator(grid, cfg.potential)
    split = eigendecompose(op)
    h = evaluate_weight(grid, cfg.weight)
    threshold = compute_a0(split, h)
    model = EnergyModel(op, split, h, cfg.nonlinearity)
    return Problem(cfg, model, split, threshold, check_hypotheses(cfg.nonlinearity))


def make_frame(problem: Problem) -> LinkingFrame:
    a = problem.config.nonlinearity.a_asymptote
    e = choose_e(problem.split, problem.threshold, a)
    s = problem.config.solver
    return calibrate_frame(problem.model, e, s.variant, n_samples=s.calibration_samples,
                           seed=s.seed)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_stages_csv(path, report_stages):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["stage", "c_before", "c_after", "k", "rho_gain", "angle",
                    "cerami_before", "lambda_face_max", "lambda_ok"])
        for s in report_stages:
            w.writerow([s.index, f"{s.c_before:.15e}", f"{s.c_after:.15e}", s.params.k,
                        f"{s.rho_gain:.15e}", f"{s.angle:.15e}", f"{s.cerami_before:.15e}",
                        f"{s.lambda_face_max:.15e}", int(s.lambda_ok)])


def _spectral_section(problem: Problem) -> dict:
    sp, th = problem.split, problem.threshold
    return {"dims": sp.dims, "sigma_minus": sp.sigma_minus, "sigma_plus": sp.sigma_plus,
            "a0": th.a0, "a0_lower_bound": th.lower_bound,
            "a": problem.config.nonlinearity.a_asymptote}


def _solve_section(problem: Problem, rep: SolveReport) -> dict:
    out = rep.summary()
    out["u_norm_induced"] = float(rep.diagnostics.column("u_norm")[-1])
    out["spectral_content"] = spectral_content(problem.model, rep.z_star)
    if rep.newton is not None:
        out["newton_residuals"] = rep.newton.residuals
        out["newton_corrections"] = rep.newton.corrections
    return out


def run(cfg: ProblemConfig, out_dir, check_only: bool = False, emit_trace: bool = False,
        stream=sys.stdout) -> int:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = {"config": cfg.to_dict(), "status": None}
    code = EXIT_ERROR
    try:
        problem = build_problem(cfg)
        report["spectral"] = _spectral_section(problem)
        report["hypotheses"] = problem.hypotheses.as_dict()
        (out / "spectral_report.txt").write_text(spectral_report(problem.split, problem.threshold))
        if not problem.hypotheses.passed:
            raise HypothesisViolation("the nonlinearity fails the growth hypotheses; "
                                      f"see the hypothesis ledger in {out / 'report.json'}")
        frame = make_frame(problem)
        report["frame"] = {**frame.as_dict(),
                           "margin": linking_margin(problem.split, problem.model.h_values,
                                                    problem.model.to_nodal(frame.e),
                                                    problem.config.nonlinearity.a_asymptote,
                                                    problem.threshold.a0),
                           "verification": frame.diagnostics.get("verification")}
        if check_only:
            report["status"] = "checked"
            code = EXIT_OK
        else:
            s = cfg.solver
            rep = solve(problem.model, frame,
                        SolverOptions(tol=s.tol, max_stages=s.max_stages, n_starts=s.n_starts,
                                      seed=s.seed, shrink=s.shrink, newton_tol=s.newton_tol))
            report["solve"] = _solve_section(problem, rep)
            rep.u_star.to_csv(out / "solution.csv")
            rep.diagnostics.to_csv(out / "residual_history.csv")
            if emit_trace:
                write_stages_csv(out / "stages.csv", rep.stage_records)
            if rep.unbounded_flag:
                print("WARNING: iterate norms grew beyond the boundedness monitor; "
                      "a bounded Cerami sequence was expected", file=stream)
            if rep.converged:
                report["status"] = "converged"
                code = EXIT_OK
            else:
                report["status"] = "not_converged"
                code = EXIT_NONCONVERGED
    except HypothesisViolation as exc:
        report["status"] = "hypothesis_violation"
        report["error"] = str(exc)
        print(f"hypothesis violation: {exc}", file=sys.stderr)
    except IndeflinkError as exc:
        report["status"] = "error"
        report["error"] = f"{type(exc).__name__}: {exc}"
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    report["exit_code"] = code
    (out / "report.json").write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True))
    print(f"{report['status']}: artifacts in {out}", file=stream)
    return code


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="indeflink",
                                description="Linking-based critical points of indefinite "
                                            "Schrödinger energies")
    p.add_argument("--config", type=Path, help="YAML or JSON problem file")
    p.add_argument("--scenario", choices=[s for s in SCENARIOS if s != "custom"],
                   help="preset problem (ignored when --config is given)")
    p.add_argument("--dim", type=int, choices=(1, 2))
    p.add_argument("--n", type=int, help="grid points per axis")
    p.add_argument("--seed", type=int)
    p.add_argument("--tol", type=float, help="Cerami tolerance")
    p.add_argument("--max-stages", type=int)
    p.add_argument("--check-only", action="store_true",
                   help="stop after the linking frame is calibrated")
    p.add_argument("--emit-trace", action="store_true", help="also write stages.csv")
    p.add_argument("--out", type=Path, default=Path("indeflink_out"), help="artifact directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = parse_config(args.config)
        else:
            cfg = preset(args.scenario or "t1")
        cfg = with_overrides(cfg, dim=args.dim, n=args.n, seed=args.seed, tol=args.tol,
                             max_stages=args.max_stages)
    except IndeflinkError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return run(cfg, args.out, check_only=args.check_only, emit_trace=args.emit_trace)


if __name__ == "__main__":
    raise SystemExit(main())
