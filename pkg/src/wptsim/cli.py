"""Command-line entry point: ``wptsim run`` and ``wptsim exp <name>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from pydantic import ValidationError

from . import experiments as ex
from .config import load_config

log = logging.getLogger("wptsim")


def _floats(text):
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text):
    return [int(v) for v in text.split(",") if v.strip()]


def _words(text):
    return [v.strip() for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wptsim", description="Charging-control simulator for RF-powered device networks.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one scenario, one CSV row per run")
    run.add_argument("--config", required=True, help="config file or preset name (full, desk)")
    run.add_argument("--policy", choices=ex.ALL_POLICIES)
    run.add_argument("--seed", type=int)
    run.add_argument("--placements", type=int, help="override replication.n_placements")
    run.add_argument("--runs", type=int, help="override replication.n_runs")
    run.add_argument("--out", help="CSV path (default: stdout)")

    exp = sub.add_parser("exp", help="run one of the studies")
    exp.add_argument("name", choices=sorted(ex.EXPERIMENTS))
    exp.add_argument("--config", required=True, help="config file or preset name (full, desk)")
    exp.add_argument("--out", required=True, help="output directory")
    exp.add_argument("--seed", type=int)
    exp.add_argument("--placements", type=int, help="override replication.n_placements")
    exp.add_argument("--runs-per-placement", type=int, help="override replication.n_runs")
    exp.add_argument("--policies", type=_words)
    exp.add_argument("--d-sweep", type=_floats)
    exp.add_argument("--ml-sweep", type=_ints)
    exp.add_argument("--pilot-powers", type=_floats, help="W per sub-channel")
    exp.add_argument("--d", type=float, default=0.6, help="spread for lifetime_vs_feedback")
    exp.add_argument("--target-hours", type=float, default=30.0)
    exp.add_argument("--trials", type=int, default=10)
    exp.add_argument("--tolerance", type=float, default=0.05, help="power search tolerance, W")
    exp.add_argument("--upper", type=float, default=64.0, help="power search upper bracket, W")
    exp.add_argument("--runs", type=int, default=1000, help="runs for validate_predictor")
    return parser


def _load(args):
    cfg = load_config(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if getattr(args, "policy", None):
        changes["policy.name"] = args.policy
    if getattr(args, "placements", None):
        changes["replication.n_placements"] = args.placements
    per = args.runs if args.command == "run" else args.runs_per_placement
    if per:
        changes["replication.n_runs"] = per
    return cfg.updated(**changes) if changes else cfg


def _experiment_kwargs(args):
    name = args.name
    kw = {}
    if args.policies:
        kw["policies"] = tuple(args.policies)
    if name in ("lifetime_vs_d", "min_power_vs_d") and args.d_sweep:
        kw["d_sweep"] = args.d_sweep
    if name == "lifetime_vs_feedback":
        kw.pop("policies", None)
        if args.policies:
            kw["policy"] = args.policies[0]
        if args.ml_sweep:
            kw["ml_sweep"] = args.ml_sweep
        if args.pilot_powers:
            kw["pilot_powers"] = args.pilot_powers
        kw["d"] = args.d
    if name == "min_power_vs_d":
        kw.update(target_lifetime=args.target_hours * 3600.0, n_trials=args.trials,
                  tolerance=args.tolerance, upper=args.upper)
    if name == "validate_predictor":
        kw["n_runs"] = args.runs
    return kw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        if args.command == "exp":
            kwargs = _experiment_kwargs(args)
    except (ValidationError, ValueError, KeyError, OSError) as err:
        print(f"wptsim: invalid configuration: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "run":
            log.info("scenario %s", cfg.digest())
            rows = ex.run_rows(cfg)
            ex.write_csv(rows, ex.RUN_COLUMNS, args.out, stream=sys.stdout)
            return 0
        func, columns = ex.EXPERIMENTS[args.name]
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        rows = func(cfg, **kwargs)
        path = out / f"{args.name}.csv"
        ex.write_csv(rows, columns, path)
        log.info("wrote %d rows to %s", len(rows), path)
    except ValueError as err:
        print(f"wptsim: {err}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
