"""
QSDA: Sequential Decision Aggregation Runner
Command-line entry point: single-SDM profiles, q out of N aggregation, grid
sweeps, large-group predictors, Monte Carlo, and threshold calibration.

Usage:
    python run_sda.py profile --dist gaussian --sigma 1 --out prof.csv
    python run_sda.py profile --dist binomial --n 5 --eps 0.05
    python run_sda.py aggregate --profile prof.csv --n 9 --q 3
    python run_sda.py sweep --dist gaussian --sigma 1 --n-grid 1:2:61 --rule fastest
    python run_sda.py asymptotics --profile prof.csv --n-grid 3:2:35
    python run_sda.py simulate --dist gaussian --sigma 1 --n 9 --q 5 --seed 7
    python run_sda.py calibrate --dist gaussian --sigma 2 --target 0.1 --n 9 --rule majority
    python run_sda.py compare --dist gaussian --sigma 2 --targets 0.05,0.1 --n-grid 1:2:21

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

import sys
import os
import argparse
import logging
from pathlib import Path

# Ensure project root is on path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import pandas as pd
from tabulate import tabulate

from config import (
    VERSION, TAIL_TOL, MC_DEFAULT_REPLICATES, MC_DEFAULT_SEED, WORKERS,
    DEFAULT_P_MD, DEFAULT_P_FA, DEFAULT_GAUSS_THETA0, DEFAULT_GAUSS_THETA1,
    DEFAULT_BINOM_TRIALS, DEFAULT_BINOM_EPS, CALIB_BRACKET,
)
from agents.sprt_model import gaussian_model, binomial_model, binomial_model_from_eps
from agents.sprt_agent import SprtAgent
from engine.decision_profile import (
    GroupSpec, validate_profile, expected_decision_time, has_finite_expected_time,
)
from engine.aggregation import aggregate
from engine.asymptotics import (
    earliest_decision_time, fastest_limits, majority_et_limit, majority_pw,
    majority_pw_limit, monotonicity_suite,
)
from engine.montecarlo import SimConfig, simulate_group
from engine.calibration import CalibrationTask, calibrate, compare_rules
from engine.sweep import sweep, SWEEP_RULES
from utils.errors import NumericalError, CalibrationError, EnumerationCapError
from utils.log import configure, get_logger
from utils.manifest import RunManifest, manifest_path
from utils.profile_io import (
    frame_to_csv, write_csv, write_json, dumps, sidecar_path, jsonable, time_fields,
    load_profile, save_profile, profile_frame, profile_summary, group_frame, group_summary,
    empirical_frame, empirical_summary,
)

log = get_logger("cli")


def print_banner():
    print()
    print("=" * 70)
    print(f"  QSDA v{VERSION}")
    print("  q out of N Sequential Decision Aggregation")
    print("=" * 70)
    print()


# ═══════════════════════════════════════════════════════════════════════════════
# ARGUMENT HELPERS
# ═══════════════════════════════════════════════════════════════════════════════


def parse_grid(text: str) -> list[int]:
    """'1:2:21' (start:step:stop, inclusive), '3,5,9' or a single integer."""
    try:
        if ":" in text:
            parts = [int(p) for p in text.split(":")]
            if len(parts) == 2:
                start, stop, step = parts[0], parts[1], 1
            elif len(parts) == 3:
                start, step, stop = parts
            else:
                raise ValueError
            if step < 1:
                raise ValueError
            return list(range(start, stop + 1, step))
        return [int(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}; use start:step:stop or a comma list")


def parse_floats(text: str) -> list[float]:
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid list {text!r}")


def common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json", "table"), default="table",
                        help="Stdout rendering (default: table)")
    common.add_argument("--out", type=Path, default=None,
                        help="Write CSV, JSON sidecar and manifest next to this path")
    common.add_argument("--seed", type=int, default=MC_DEFAULT_SEED,
                        help=f"Root random seed (default: {MC_DEFAULT_SEED})")
    common.add_argument("--tail-tol", type=float, default=TAIL_TOL,
                        help=f"Negligible residual mass (default: {TAIL_TOL:g})")
    common.add_argument("--horizon", type=int, default=None,
                        help="Fixed T_max instead of automatic growth")
    common.add_argument("--workers", type=int, default=WORKERS,
                        help=f"Worker processes (default: {WORKERS})")
    common.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    return common


def model_parser(trials_flags=("--trials",)) -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    model.add_argument("--profile", type=Path, default=None,
                       help="Read the decision profile from a CSV instead of a model")
    model.add_argument("--dist", choices=("gaussian", "binomial"), default="gaussian")
    model.add_argument("--theta0", type=float, default=None)
    model.add_argument("--theta1", type=float, default=None)
    model.add_argument("--sigma", type=float, default=None, help="Gaussian standard deviation (required)")
    model.add_argument(*trials_flags, dest="trials", type=int, default=DEFAULT_BINOM_TRIALS,
                       help=f"Binomial trials per observation (default: {DEFAULT_BINOM_TRIALS})")
    model.add_argument("--eps", type=float, default=DEFAULT_BINOM_EPS,
                       help="Binomial theta = 0.5 -/+ eps when thetas are not given")
    model.add_argument("--pmd", type=float, default=DEFAULT_P_MD, help="Wald design P[say H0 | H1]")
    model.add_argument("--pfa", type=float, default=DEFAULT_P_FA, help="Wald design P[say H1 | H0]")
    model.add_argument("--eta", type=float, default=None, help="Symmetric threshold, overrides Wald")
    model.add_argument("--delta", type=float, default=None, help="Chain grid step (gaussian)")
    return model


def build_model(args, parser):
    if args.dist == "gaussian":
        if args.sigma is None:
            parser.error("--sigma is required for --dist gaussian")
        theta0 = DEFAULT_GAUSS_THETA0 if args.theta0 is None else args.theta0
        theta1 = DEFAULT_GAUSS_THETA1 if args.theta1 is None else args.theta1
        model = gaussian_model(theta0, theta1, args.sigma, args.pmd, args.pfa)
    elif args.theta0 is None and args.theta1 is None:
        model = binomial_model_from_eps(args.eps, args.trials, args.pmd, args.pfa)
    else:
        if args.theta0 is None or args.theta1 is None:
            parser.error("give both --theta0 and --theta1, or neither")
        model = binomial_model(args.theta0, args.theta1, args.trials, args.pmd, args.pfa)
    if args.eta is not None:
        model = model.with_symmetric_threshold(args.eta)
    return model


def resolve_profile(args, parser, horizon=None):
    if args.profile is not None:
        return load_profile(args.profile)
    agent = SprtAgent(build_model(args, parser), delta=args.delta, tail_tol=args.tail_tol)
    return agent.decision_profile(horizon)


# ═══════════════════════════════════════════════════════════════════════════════
# OUTPUT
# ═══════════════════════════════════════════════════════════════════════════════


def emit(args, kind: str, frame: pd.DataFrame, summary: dict, writer=None):
    """
    Print the result and, with --out, write data files plus their manifest.
    writer(out, manifest_name) replaces the generic CSV + sidecar writer.
    """
    manifest_name = None
    if args.out is not None:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        mpath = manifest_path(out)
        manifest_name = mpath.name
        params = {k: v for k, v in vars(args).items() if k != "handler"}
        manifest = RunManifest(args.command, jsonable({k: str(v) if isinstance(v, Path) else v
                                                       for k, v in params.items()}), args.seed)
        if writer is not None:
            csv_path, json_path = writer(out, manifest_name)
        else:
            csv_path = write_csv(frame, out, kind, manifest_name)
            json_path = write_json(summary, sidecar_path(out))
        manifest.record(csv_path, json_path)
        manifest.finish(mpath)
        log.info(f"[OUT] wrote {csv_path}, {json_path.name}, {mpath.name}")

    if args.format == "csv":
        sys.stdout.write(frame_to_csv(frame, kind, manifest_name))
    elif args.format == "json":
        sys.stdout.write(dumps({"summary": summary, "rows": frame.to_dict(orient="records")}) + "\n")
    else:
        print_banner()
        scalars = [(k, v) for k, v in jsonable(summary).items() if not isinstance(v, (dict, list))]
        print(tabulate(scalars, headers=["Field", "Value"], tablefmt="grid"))
        print()
        print(tabulate(frame, headers="keys", tablefmt="grid", showindex=False))


# ═══════════════════════════════════════════════════════════════════════════════
# COMMANDS
# ═══════════════════════════════════════════════════════════════════════════════


def cmd_profile(args, parser):
    profile = resolve_profile(args, parser, args.horizon)
    report = validate_profile(profile, args.tail_tol)
    summary = profile_summary(profile)
    summary["valid"] = report.passed
    summary["checks"] = report.checks
    summary["finite_expected_time"] = has_finite_expected_time(profile, args.tail_tol)
    for h in (0, 1):
        branch = profile.branch(h)
        summary[f"t_bar_h{h}"] = earliest_decision_time(branch)
        summary.update(time_fields(expected_decision_time(branch, args.tail_tol).mean, f"e_t_h{h}"))
    emit(args, "profile", profile_frame(profile), summary,
         writer=lambda out, manifest_name: save_profile(profile, out, manifest_name, summary))


def _resolve_q(args, parser) -> int:
    if args.q is not None:
        return args.q
    if args.rule == "fastest":
        return 1
    if args.rule == "majority":
        return GroupSpec.majority(args.n).q
    parser.error("give --q or --rule fastest|majority")


def cmd_aggregate(args, parser):
    profile = resolve_profile(args, parser)
    q = _resolve_q(args, parser)
    outcome = aggregate(profile, args.n, q, args.horizon, args.hypothesis, args.tail_tol)
    emit(args, "group", group_frame(outcome), group_summary(outcome))


def cmd_sweep(args, parser):
    profile = resolve_profile(args, parser)
    rows = sweep(profile, args.n_grid, args.rule, args.hypothesis, args.horizon,
                 args.tail_tol, args.workers)
    frame = pd.DataFrame(rows, columns=["N", "q", "p_c", "p_w", "p_nd", "e_t", "error"])
    summary = {"rule": args.rule, "hypothesis": args.hypothesis, "cells": len(rows),
               "failed_cells": sum(1 for r in rows if r["error"])}
    emit(args, "sweep", frame, summary)


def cmd_asymptotics(args, parser):
    profile = resolve_profile(args, parser)
    limits = fastest_limits(profile, tail_tol=args.tail_tol)
    case = majority_et_limit(profile)
    p_w_single = float(profile.under_h1.p_say0.sum())
    summary = {
        "fastest": limits,
        "majority_time": {**jsonable(case), "adjacent_crossing": case.adjacent_crossing,
                          "limit_et_infinite": case.limit_et == float("inf")},
        "single_p_w": p_w_single,
        "majority_pw_limit": majority_pw_limit(p_w_single),
    }
    frame = pd.DataFrame(columns=["N", "q", "metric", "value", "monotone_ok", "chain", "theorem"])
    if args.n_grid:
        odd = [n for n in args.n_grid if n % 2 == 1]
        summary["majority_pw"] = [{"N": n, "p_w": majority_pw(p_w_single, n)} for n in odd]
        report = monotonicity_suite(profile, odd, hypothesis=args.hypothesis,
                                    horizon=args.horizon, tail_tol=args.tail_tol)
        frame = pd.DataFrame(report.records)
        summary["theorem_violations"] = len(report.violations)
        summary["conjecture_findings"] = len(report.findings)
    emit(args, "monotonicity", frame, summary)


def cmd_simulate(args, parser):
    if args.raw:
        if args.profile is not None:
            parser.error("--raw simulates SPRT trajectories and cannot use --profile")
        source = build_model(args, parser)
    else:
        source = resolve_profile(args, parser)
    q = _resolve_q(args, parser)
    cfg = SimConfig(args.n, q, source, args.replicates, args.seed, args.horizon)
    outcome = simulate_group(cfg, args.hypothesis, args.workers)
    emit(args, "empirical", empirical_frame(outcome), empirical_summary(outcome))


def cmd_calibrate(args, parser):
    if args.profile is not None:
        parser.error("calibration regenerates profiles; give model arguments instead of --profile")
    task = CalibrationTask(args.target, args.n, args.rule, build_model(args, parser),
                           bracket=tuple(args.bracket), delta=args.delta, tail_tol=args.tail_tol)
    result = calibrate(task)
    row = {"target": args.target, "n": args.n, "rule": args.rule, **result.as_row()}
    summary = {**row, **time_fields(result.group_expected_T)}
    emit(args, "calibrate", pd.DataFrame([row]), summary)


def cmd_compare(args, parser):
    if args.profile is not None:
        parser.error("comparison regenerates profiles; give model arguments instead of --profile")
    model = build_model(args, parser)
    comparison = compare_rules(args.targets, args.n_grid, model, args.workers,
                               bracket=tuple(args.bracket), delta=args.delta, tail_tol=args.tail_tol)
    summary = {"crossovers": {f"{t:g}": n for t, n in comparison.crossovers.items()}}
    emit(args, "compare", pd.DataFrame(comparison.rows), summary)


# ═══════════════════════════════════════════════════════════════════════════════
# MAIN
# ═══════════════════════════════════════════════════════════════════════════════


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="QSDA: q out of N sequential decision aggregation"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    common = common_parser()
    model = model_parser()

    p = sub.add_parser("profile", parents=[common, model_parser(("--trials", "--n"))],
                       help="Single-SDM decision profile")
    p.set_defaults(handler=cmd_profile)

    def group_args(p):
        p.add_argument("--n", type=int, required=True, help="Group size N")
        p.add_argument("--q", type=int, default=None, help="Threshold q")
        p.add_argument("--rule", choices=("fastest", "majority"), default=None)
        p.add_argument("--hypothesis", type=int, choices=(0, 1), default=1)

    p = sub.add_parser("aggregate", parents=[common, model], help="Exact group decision law")
    group_args(p)
    p.set_defaults(handler=cmd_aggregate)

    p = sub.add_parser("sweep", parents=[common, model], help="Group metrics over an (N, q) grid")
    p.add_argument("--n-grid", type=parse_grid, required=True)
    p.add_argument("--rule", choices=SWEEP_RULES, default="all-q")
    p.add_argument("--hypothesis", type=int, choices=(0, 1), default=1)
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("asymptotics", parents=[common, model], help="Large-N limits and monotonicity")
    p.add_argument("--n-grid", type=parse_grid, default=None)
    p.add_argument("--hypothesis", type=int, choices=(0, 1), default=1)
    p.set_defaults(handler=cmd_asymptotics)

    p = sub.add_parser("simulate", parents=[common, model], help="Monte Carlo of the full protocol")
    group_args(p)
    p.add_argument("--replicates", type=int, default=MC_DEFAULT_REPLICATES)
    p.add_argument("--raw", action="store_true", help="Simulate raw observations and SPRTs")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("calibrate", parents=[common, model], help="Threshold for a target group p_w")
    p.add_argument("--target", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--rule", choices=("fastest", "majority"), required=True)
    p.add_argument("--bracket", type=parse_floats, default=list(CALIB_BRACKET))
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("compare", parents=[common, model], help="Fastest vs majority at equal accuracy")
    p.add_argument("--targets", type=parse_floats, required=True)
    p.add_argument("--n-grid", type=parse_grid, required=True)
    p.add_argument("--bracket", type=parse_floats, default=list(CALIB_BRACKET))
    p.set_defaults(handler=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure(logging.DEBUG if args.verbose else None)
    try:
        args.handler(args, parser)
    except (NumericalError, CalibrationError, EnumerationCapError) as e:
        log.error(f"[FAIL] {e}")
        return 3
    except (ValueError, OSError) as e:
        log.error(f"[FAIL] {e}")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
