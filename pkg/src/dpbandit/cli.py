"""Command line entry point: ``dpb run|sweep|concentration|bounds``."""
from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .bounds import lower_bound_rate
from .config import ConfigError, load_config
from .environment import format_float
from .harness import cmd_run, cmd_sweep
from .lab import ConcentrationConfig, run_concentration


def _eps_grid(text: str) -> list[float]:
    try:
        lo, hi, steps = text.split(":")
        grid = np.linspace(float(lo), float(hi), int(steps))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi:steps, got {text!r}") from None
    if grid.size < 1 or np.any(grid <= 0):
        raise argparse.ArgumentTypeError("eps grid must be nonempty and positive")
    return [float(e) for e in grid]


def _means(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated means, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dpb", description="Private Bernoulli bandit experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="regret curves per (policy, eps)")
    run.add_argument("--config", required=True)
    run.add_argument("--out")
    run.add_argument("--workers", type=int, default=1, help="overridden by $DPB_WORKERS")

    sweep = sub.add_parser("sweep", help="final regret across the eps list of a config")
    sweep.add_argument("--config", required=True)
    sweep.add_argument("--out")
    sweep.add_argument("--workers", type=int, default=1, help="overridden by $DPB_WORKERS")

    conc = sub.add_parser("concentration", help="empirical tail of a private mean versus its bound")
    conc.add_argument("--n", type=int, required=True)
    conc.add_argument("--m", type=int, required=True)
    conc.add_argument("--eps", type=float, required=True)
    conc.add_argument("--mu", type=float, required=True)
    conc.add_argument("--x", type=float, required=True)
    conc.add_argument("--trials", type=int, default=10**6)
    conc.add_argument("--seed", type=int, default=0)

    bnd = sub.add_parser("bounds", help="regret-rate constants over an eps grid")
    bnd.add_argument("--means", type=_means, required=True)
    bnd.add_argument("--eps-grid", type=_eps_grid, required=True)
    bnd.add_argument("--alpha", type=float, default=2.0)
    bnd.add_argument("--csv", help="write the eps sweep CSV here instead of stdout")
    return p


def _bounds(args) -> None:
    reports = [lower_bound_rate(args.means, e, args.alpha) for e in args.eps_grid]
    print(json.dumps([r.to_dict() for r in reports], indent=2))
    rows = [["eps", "lower_rate", "upper_rate"]]
    rows += [[format_float(r.eps), format_float(r.lower_rate), format_float(r.upper_rate)] for r in reports]
    if args.csv:
        with open(args.csv, "w", encoding="utf-8", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(rows)
    else:
        print()
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("run", "sweep"):
            config = load_config(args.config)
            fn = cmd_run if args.command == "run" else cmd_sweep
            for path in fn(config, args.out, args.workers):
                print(path)
        elif args.command == "concentration":
            cfg = ConcentrationConfig(args.n, args.m, args.mu, args.eps, args.x, args.trials, args.seed)
            report = run_concentration(cfg)
            print(json.dumps(report.to_dict(), indent=2))
            return 0 if report.passed else 1
        else:
            _bounds(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
