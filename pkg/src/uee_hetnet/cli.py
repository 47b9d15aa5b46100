"""
Command-line entry point.

    uee-hetnet simulate --config cfg.json [--seed N] [--drops N] [--out DIR]
                        [--algorithms a,b] [--traces] [--jobs N] [--rate-unit bits]
    uee-hetnet oracle-check --config cfg.json --out DIR
    uee-hetnet show-config

Exit codes: 0 success, 1 usage or configuration error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .baselines import OracleSizeError
from .experiment import UsageError, run_experiment, run_oracle_check
from .netmodel import ConfigError, ExperimentConfig

EXIT_OK, EXIT_USAGE, EXIT_IO = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser():
    p = _Parser(prog="uee-hetnet", description="UEE user association and power control experiments")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run Monte-Carlo drops and write CSV tables")
    s.add_argument("--config", help="JSON file with ExperimentConfig fields (defaults if omitted)")
    s.add_argument("--seed", type=int, help="master seed (overrides seed)")
    s.add_argument("--drops", type=int, help="number of drops (overrides n_drops)")
    s.add_argument("--out", help="output directory (overrides output_dir)")
    s.add_argument("--algorithms", help="comma-separated subset of proposed,maxsinr_pc,maxsinr_maxpower")
    s.add_argument("--rate-unit", choices=("nats", "bits"), help="unit of per-user rates in results.csv")
    s.add_argument("--traces", action="store_true", help="also write per-run outer-loop traces")
    s.add_argument("--jobs", type=int, default=1, help="worker processes (output is unaffected)")
    s.add_argument("--quiet", action="store_true", help="no progress on stderr")

    o = sub.add_parser("oracle-check", help="compare IUAPC with the exhaustive grid oracle")
    o.add_argument("--config", required=True)
    o.add_argument("--out", required=True)

    sub.add_parser("show-config", help="print the resolved default configuration as JSON")
    return p


def load_config(args):
    cfg = ExperimentConfig.from_file(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {}
    if getattr(args, "seed", None) is not None:
        over["seed"] = args.seed
    if getattr(args, "drops", None) is not None:
        over["n_drops"] = args.drops
    if getattr(args, "algorithms", None):
        over["algorithms"] = tuple(a.strip() for a in args.algorithms.split(",") if a.strip())
    if getattr(args, "rate_unit", None):
        over["rate_unit"] = args.rate_unit
    if over:
        cfg = ExperimentConfig.from_dict({**dataclasses.asdict(cfg), **over})
    return cfg


def _progress(done, total, elapsed):
    print(f"\rdrop {done}/{total}  {elapsed:7.1f} s", end="\n" if done == total else "", file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "show-config":
            print(json.dumps(ExperimentConfig().to_dict(), indent=2))
            return EXIT_OK
        cfg = load_config(args)
        if args.command == "simulate":
            if args.jobs < 1:
                raise UsageError("--jobs must be >= 1")
            results = run_experiment(cfg, out_dir=args.out, traces=args.traces, jobs=args.jobs,
                                     progress=None if args.quiet else _progress)
            failed = sum(1 for r in results if r.status.startswith("error"))
            print(f"{len(results)} rows written to {args.out or cfg.output_dir}"
                  + (f" ({failed} failed runs, see status column)" if failed else ""))
        else:
            ratios = run_oracle_check(cfg, args.out)
            print(f"{ratios.size} instances, median ratio {float(np.median(ratios)):.4f}"
                  f" (min {ratios.min():.4f}, max {ratios.max():.4f})")
    except (ConfigError, UsageError, OracleSizeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
