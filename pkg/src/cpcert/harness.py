"""Command-line front end: experiment runs, parameter sweeps, rate fits.

Subcommands
-----------
solve     run one experiment, write trajectory.csv + summary.json
sweep     run a (theta x safety) grid, write sweep_summary.csv/.json
validate  classify step sizes against the admissible-product bound
rate      least-squares slope of log(metric) vs log(k) from a trajectory CSV
plotdata  two-column (k, value) files per metric plus a gnuplot script

Exit codes: 0 all asserted certificates pass, 1 a certificate failed,
2 usage/config error. CSV and JSON outputs are byte-deterministic for a
fixed config: floats are serialized with shortest round-trip precision and
summaries carry no timestamps.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .certificates import (CertificateTable, _flag_arrays, certify_trajectory,
                           kkt_residual)
from .problems import kkt_by_long_run, problem_from_config
from .solver import (SolverParams, Trajectory, Validity, run, suggest_steps,
                     validate_params)
from .hilbert import PPoint

__all__ = [
    "ExperimentConfig",
    "RateFit",
    "cmd_solve",
    "cmd_sweep",
    "cmd_validate",
    "cmd_rate",
    "cmd_plotdata",
    "fit_rate",
    "emit_plotdata",
    "corrupt_trajectory",
    "recompute_flags_from_csv",
    "read_trajectory_csv",
    "main",
]

CSV_COLUMNS = ["k", "gap", "ergodic_gap", "lyapunov", "descent_residual",
               "lower_bound_residual", "eta_plus", "eta_minus",
               "dist_to_star", "sum_gap"]


class UsageError(ValueError):
    """Bad configuration or command-line input (exit code 2)."""


@dataclass
class ExperimentConfig:
    """One experiment: a problem reference plus solver and output settings.

    A config file plus the code version determines all outputs
    byte-for-byte. ``fault`` optionally perturbs one stored iterate after
    the run (negative control for the certificate engine): {"k": int,
    "delta": float}.
    """

    problem: dict
    theta: float = 1.0
    tau: float | None = None
    sigma: float | None = None
    safety: float = 0.9
    ratio: float = 1.0
    iters: int = 2000
    seed: int = 0
    tolerance: float = 1e-9
    stop_tol: float | None = None
    override_invalid: bool = False
    oracle_iters: int | None = None
    fault: dict | None = None
    grid: dict | None = None
    out: str = "results"

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = json.load(fh)
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {path} is not valid JSON: {e}") from None
        if not isinstance(raw, dict) or "problem" not in raw:
            raise UsageError(f"config file {path} must be an object with a 'problem' key")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        return cls(**raw)

    def apply_overrides(self, args) -> None:
        for name in ("theta", "tau", "sigma", "safety", "ratio", "iters", "seed", "out"):
            v = getattr(args, name, None)
            if v is not None:
                setattr(self, name, v)
        if getattr(args, "override_invalid", False):
            self.override_invalid = True

    def to_dict(self) -> dict:
        """Experiment-defining fields only (output paths excluded)."""
        d = {
            "problem": self.problem,
            "theta": self.theta,
            "tau": self.tau,
            "sigma": self.sigma,
            "safety": self.safety,
            "ratio": self.ratio,
            "iters": self.iters,
            "seed": self.seed,
            "tolerance": self.tolerance,
            "stop_tol": self.stop_tol,
            "override_invalid": self.override_invalid,
            "oracle_iters": self.oracle_iters,
            "fault": self.fault,
        }
        if self.grid is not None:
            d["grid"] = self.grid
        return d


@dataclass(frozen=True)
class RateFit:
    """Least-squares fit of log(value) against log(k) over an index window."""

    slope: float
    intercept: float
    r_squared: float
    window: tuple[int, int]
    points: int = 0


def fit_rate(values, window: tuple[int, int], ks=None) -> RateFit:
    """Fit log(value) ~ slope*log(k) + intercept over window = (k_min, k_max).

    Nonpositive or non-finite values are excluded; fewer than 10 usable
    points is a usage error.
    """
    values = np.asarray(values, dtype=float)
    ks = np.arange(1, len(values) + 1) if ks is None else np.asarray(ks)
    k_min, k_max = window
    mask = (ks >= k_min) & (ks <= k_max) & np.isfinite(values) & (values > 0)
    if int(mask.sum()) < 10:
        raise UsageError(
            f"rate fit needs >= 10 positive points in window {window}, "
            f"found {int(mask.sum())}"
        )
    lk = np.log(ks[mask].astype(float))
    lv = np.log(values[mask])
    coeffs, *_ = np.linalg.lstsq(np.column_stack([lk, np.ones_like(lk)]), lv, rcond=None)
    slope, intercept = float(coeffs[0]), float(coeffs[1])
    pred = slope * lk + intercept
    ss_res = float(np.sum((lv - pred) ** 2))
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return RateFit(slope, intercept, r2, (int(k_min), int(k_max)), int(mask.sum()))


# --- deterministic serialization -------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def write_trajectory_csv(path, table: CertificateTable) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for i, k in enumerate(table.ks):
            writer.writerow([
                int(k),
                _fmt(table.gap[i]),
                _fmt(table.ergodic_gap[i]),
                _fmt(table.lyapunov[i]),
                _fmt(table.descent_residual[i]),
                _fmt(table.lower_bound_residual[i]),
                _fmt(table.eta_plus),
                _fmt(table.eta_minus),
                _fmt(table.dist_to_star[i]),
                _fmt(table.sum_gap[i]),
            ])


def read_trajectory_csv(path) -> dict[str, np.ndarray]:
    """Read a trajectory CSV back into column arrays."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_COLUMNS:
            raise UsageError(f"{path}: unexpected columns {header}")
        rows = [[float(v) for v in row] for row in reader]
    data = np.array(rows, dtype=float)
    if data.size == 0:
        raise UsageError(f"{path}: no data rows")
    return {name: data[:, i] for i, name in enumerate(CSV_COLUMNS)}


def recompute_flags_from_csv(path, tol: float) -> dict[str, np.ndarray]:
    """Recompute pass flags from a persisted CSV (round-trip consistency)."""
    cols = read_trajectory_csv(path)
    return _flag_arrays(
        cols["k"].astype(int), cols["lyapunov"], cols["ergodic_gap"],
        cols["descent_residual"], cols["lower_bound_residual"],
        cols["sum_gap"], float(cols["lyapunov"][0]), tol,
    )


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def corrupt_trajectory(traj: Trajectory, k: int, delta: float) -> Trajectory:
    """Shift every entry of iterate k by delta (negative-control helper)."""
    if not traj.full_history:
        raise ValueError("can only corrupt a full-history trajectory")
    if not 0 <= k <= traj.n_iters:
        raise ValueError(f"iterate {k} out of range 0..{traj.n_iters}")
    X = traj.X.copy()
    Y = traj.Y.copy()
    X[k] = X[k] + delta
    ks = np.arange(1, traj.n_iters + 1)[:, None]
    EX = np.cumsum(X[1:], axis=0) / ks
    EY = np.cumsum(Y[1:], axis=0) / ks
    return Trajectory(traj.params, X, Y, EX, EY, traj.n_iters,
                      traj.stopped_at, True, 0)


# --- experiment execution ---------------------------------------------------

def _resolve_params(cfg: ExperimentConfig, operator_norm: float) -> SolverParams:
    if (cfg.tau is None) != (cfg.sigma is None):
        raise UsageError("give both tau and sigma, or neither")
    if cfg.tau is not None:
        return SolverParams(cfg.tau, cfg.sigma, cfg.theta, operator_norm)
    try:
        tau, sigma = suggest_steps(cfg.theta, operator_norm, cfg.safety, cfg.ratio)
    except ValueError as e:
        raise UsageError(str(e)) from None
    return SolverParams(tau, sigma, cfg.theta, operator_norm)


def _get_kkt(problem, cfg: ExperimentConfig):
    if problem.kkt is not None:
        return problem.kkt
    oracle_iters = cfg.oracle_iters or max(20000, 10 * cfg.iters)
    oracle_params = SolverParams(
        *suggest_steps(1.0, problem.L.norm_bound, 0.9, 1.0),
        theta=1.0, operator_norm=problem.L.norm_bound,
    )
    return kkt_by_long_run(problem, oracle_params, oracle_iters)


def _resolved_problem_config(cfg: ExperimentConfig) -> dict:
    """Problem config with the experiment seed as the default generator seed."""
    pc = dict(cfg.problem)
    params = dict(pc.get("params", {}))
    if "generator" in pc and "seed" not in params:
        params["seed"] = cfg.seed
    pc["params"] = params
    return pc


def _execute(cfg: ExperimentConfig):
    """Build problem, run, certify. Returns (problem, kkt, params, traj, table)."""
    problem = problem_from_config(_resolved_problem_config(cfg))
    params = _resolve_params(cfg, problem.L.norm_bound)
    status = validate_params(params)
    if status.kind is Validity.INVALID and not cfg.override_invalid:
        raise UsageError(
            f"parameters are Invalid ({status}); set override_invalid to run anyway"
        )
    kkt = _get_kkt(problem, cfg)
    z0 = PPoint(np.zeros(problem.L.cols), np.zeros(problem.L.rows))
    traj = run(problem, params, z0, max_iters=cfg.iters, stop_tol=cfg.stop_tol,
               override_invalid=cfg.override_invalid)
    if cfg.fault is not None:
        traj = corrupt_trajectory(traj, int(cfg.fault["k"]), float(cfg.fault["delta"]))
    table = certify_trajectory(traj, kkt, problem, tol=cfg.tolerance)
    return problem, kkt, params, traj, table


def _params_block(params: SolverParams) -> dict:
    status = validate_params(params)
    return {
        "tau": params.tau,
        "sigma": params.sigma,
        "theta": params.theta,
        "operator_norm": params.operator_norm,
        "product": status.product,
        "bound_rhs": None if math.isnan(status.bound_rhs) else status.bound_rhs,
        "margin": None if math.isnan(status.margin) else status.margin,
        "p_positivity_product": status.p_positivity_product,
        "p_positivity_ok": status.p_positivity_ok,
        "status": status.kind.value,
    }


def cmd_solve(cfg: ExperimentConfig) -> int:
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem, kkt, params, traj, table = _execute(cfg)
    summary = {
        "config": cfg.to_dict(),
        "problem": {"name": problem.name, "rows": problem.L.rows,
                    "cols": problem.L.cols, "metadata": problem.metadata},
        "params": _params_block(params),
        "iterations": traj.n_iters,
        "stopped_at": traj.stopped_at,
        "kkt_oracle_residual": kkt.residual,
        "final_fixed_point_residual": _final_residual(traj, params),
        "certificates": table.summarize(),
    }
    write_trajectory_csv(out_dir / "trajectory.csv", table)
    write_json(out_dir / "summary.json", summary)
    cert = summary["certificates"]
    if cert["all_pass"] is False:
        print(f"certificate failure: first failing k = {cert['first_failing_k']} "
              f"(see {out_dir / 'summary.json'})", file=sys.stderr)
        return 1
    return 0


def _final_residual(traj: Trajectory, params: SolverParams) -> float:
    dx = traj.X[-1] - traj.X[-2]
    dy = traj.Y[-1] - traj.Y[-2]
    return max(float(np.linalg.norm(dx)) / params.tau,
               float(np.linalg.norm(dy)) / params.sigma)


SWEEP_COLUMNS = ["theta", "safety", "ratio", "tau", "sigma", "product",
                 "status", "v_monotone", "max_descent_residual",
                 "ergodic_gap_final", "all_pass", "first_failing_k",
                 "exit_code"]


def cmd_sweep(cfg: ExperimentConfig) -> int:
    if not cfg.grid or "theta" not in cfg.grid or "safety" not in cfg.grid:
        raise UsageError("sweep config needs grid: {theta: [...], safety: [...]}")
    out_dir = Path(cfg.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = problem_from_config(_resolved_problem_config(cfg))
    kkt = _get_kkt(problem, cfg)
    z0 = PPoint(np.zeros(problem.L.cols), np.zeros(problem.L.rows))
    ratio = float(cfg.grid.get("ratio", cfg.ratio))
    rows = []
    worst = 0
    for theta in cfg.grid["theta"]:
        for safety in cfg.grid["safety"]:
            row = {"theta": theta, "safety": safety, "ratio": ratio}
            try:
                tau, sigma = suggest_steps(theta, problem.L.norm_bound, safety, ratio)
                params = SolverParams(tau, sigma, theta, problem.L.norm_bound)
                status = validate_params(params)
                if status.kind is Validity.INVALID and not cfg.override_invalid:
                    raise UsageError(f"cell parameters are Invalid ({status})")
                traj = run(problem, params, z0, max_iters=cfg.iters,
                           stop_tol=cfg.stop_tol,
                           override_invalid=cfg.override_invalid)
                table = certify_trajectory(traj, kkt, problem, tol=cfg.tolerance)
                summ = table.summarize()
                flags = table.flags() if table.asserted else None
                row.update({
                    "tau": tau, "sigma": sigma, "product": status.product,
                    "status": status.kind.value,
                    "v_monotone": bool(np.all(flags["v_monotone"])) if flags else None,
                    "max_descent_residual": summ["max_descent_residual"],
                    "ergodic_gap_final": summ["final_ergodic_gap"],
                    "all_pass": summ["all_pass"],
                    "first_failing_k": summ["first_failing_k"],
                    "exit_code": 0 if summ["all_pass"] in (True, None) else 1,
                })
            except (UsageError, ValueError) as e:
                row.update({k: None for k in SWEEP_COLUMNS if k not in row})
                row["status"] = "config-error"
                row["exit_code"] = 2
                print(f"sweep cell theta={theta} safety={safety}: {e}", file=sys.stderr)
            if row["exit_code"] == 1:
                worst = 1
            rows.append(row)
    with open(out_dir / "sweep_summary.csv", "w", encoding="utf-8", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([_csv_cell(row[c]) for c in SWEEP_COLUMNS])
    write_json(out_dir / "sweep_summary.json",
               {"config": cfg.to_dict(), "cells": rows})
    return worst


def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    if isinstance(v, float):
        return _fmt(v)
    return v


def cmd_validate(cfg: ExperimentConfig) -> int:
    problem = problem_from_config(_resolved_problem_config(cfg))
    params = _resolve_params(cfg, problem.L.norm_bound)
    print(json.dumps(_params_block(params), indent=2, sort_keys=True))
    return 0


def cmd_rate(csv_path, metric: str, window: tuple[int, int]) -> int:
    cols = read_trajectory_csv(csv_path)
    if metric not in cols:
        raise UsageError(f"unknown metric {metric!r}; available: {CSV_COLUMNS[1:]}")
    fit = fit_rate(cols[metric], window, ks=cols["k"].astype(int))
    print(json.dumps({
        "metric": metric,
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r_squared": fit.r_squared,
        "window": list(fit.window),
        "points": fit.points,
    }, indent=2, sort_keys=True))
    return 0


def emit_plotdata(csv_path, out_dir) -> list[str]:
    """Write per-metric (k, value) data files plus a gnuplot script.

    <metric>.dat skips non-finite values; <metric>_loglog.dat additionally
    blanks nonpositive values so log axes stay valid. Output bytes are a
    pure function of the input CSV.
    """
    cols = read_trajectory_csv(csv_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ks = cols["k"].astype(int)
    written = []
    metrics = [c for c in CSV_COLUMNS if c != "k"]
    for metric in metrics:
        vals = cols[metric]
        lin = out_dir / f"{metric}.dat"
        with open(lin, "w", encoding="utf-8", newline="\n") as fh:
            for k, v in zip(ks, vals):
                fh.write(f"{k} {_fmt(v)}\n" if math.isfinite(v) else f"{k} \n")
        log = out_dir / f"{metric}_loglog.dat"
        with open(log, "w", encoding="utf-8", newline="\n") as fh:
            for k, v in zip(ks, vals):
                good = math.isfinite(v) and v > 0
                fh.write(f"{k} {_fmt(v)}\n" if good else f"{k} \n")
        written += [str(lin), str(log)]
    script = out_dir / "plots.gp"
    with open(script, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# gnuplot script generated from "
                 f"{Path(csv_path).name}\n")
        fh.write('set datafile missing ""\n')
        for metric in metrics:
            fh.write(f'\nset title "{metric}"\nunset logscale\n')
            fh.write(f'plot "{metric}.dat" using 1:2 with lines title "{metric}"\n')
            fh.write("set logscale xy\n")
            fh.write(f'plot "{metric}_loglog.dat" using 1:2 with lines '
                     f'title "{metric} (log-log)"\n')
    written.append(str(script))
    return written


def cmd_plotdata(csv_path, out_dir) -> int:
    emit_plotdata(csv_path, out_dir)
    return 0


# --- argument parsing -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cpcert",
        description="Primal-dual solver with per-iteration convergence certificates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--theta", type=float)
        p.add_argument("--tau", type=float)
        p.add_argument("--sigma", type=float)
        p.add_argument("--safety", type=float)
        p.add_argument("--ratio", type=float)
        p.add_argument("--iters", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--override-invalid", dest="override_invalid",
                       action="store_true", default=False)

    p_solve = sub.add_parser("solve", help="run one experiment and certify it")
    add_common(p_solve)
    p_sweep = sub.add_parser("sweep", help="run a (theta x safety) grid")
    add_common(p_sweep)
    p_val = sub.add_parser("validate", help="classify step sizes only")
    add_common(p_val)

    p_rate = sub.add_parser("rate", help="fit a log-log decay slope")
    p_rate.add_argument("csv", help="trajectory CSV from solve")
    p_rate.add_argument("--metric", default="ergodic_gap")
    p_rate.add_argument("--window", type=int, nargs=2, default=[50, 2000],
                        metavar=("KMIN", "KMAX"))

    p_plot = sub.add_parser("plotdata", help="emit plot-ready data files")
    p_plot.add_argument("csv", help="trajectory CSV from solve")
    p_plot.add_argument("--out", default="plots", help="output directory")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        if args.command in ("solve", "sweep", "validate"):
            cfg = ExperimentConfig.from_file(args.config)
            cfg.apply_overrides(args)
            if args.command == "solve":
                return cmd_solve(cfg)
            if args.command == "sweep":
                return cmd_sweep(cfg)
            return cmd_validate(cfg)
        if args.command == "rate":
            return cmd_rate(args.csv, args.metric, tuple(args.window))
        if args.command == "plotdata":
            return cmd_plotdata(args.csv, args.out)
        raise UsageError(f"unknown command {args.command!r}")
    except (UsageError, OSError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
