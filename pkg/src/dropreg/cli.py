"""Command-line entry point.

Subcommands: ``run`` executes one config, ``compare`` tabulates several,
``kp-sweep`` grids controller gain against data fraction, ``eval``
re-scores a saved checkpoint on a delimited dataset dump. Exit codes:
0 success, 1 runtime failure, 2 configuration or usage error.
"""

from __future__ import annotations

import argparse
import sys

from . import runner
from .errors import ConfigError, ParseError, UsageError


def _float_list(text: str):
    try:
        values = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated number list, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _add_common(p):
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--out-dir", default=None, help="override the output directory")
    p.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dropreg",
        description="Dropout-rate regulation experiments: train, compare, sweep, eval.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train and evaluate one configured experiment")
    p.add_argument("config", help="path to a key = value config file")
    _add_common(p)

    p = sub.add_parser("compare", help="run several configs and tabulate the metrics")
    p.add_argument("configs", nargs="+", help="config files to run")
    _add_common(p)

    p = sub.add_parser("kp-sweep", help="grid of regulated runs over kp and data fraction")
    p.add_argument("config", help="base config file")
    p.add_argument("--kp", type=_float_list, required=True,
                   help="comma-separated controller gains, e.g. 0.15,0.5,10")
    p.add_argument("--fraction", type=_float_list, default=[1.0],
                   help="comma-separated train-data fractions, e.g. 0.2,1.0")
    _add_common(p)

    p = sub.add_parser("eval", help="re-evaluate a checkpoint on a delimited dataset")
    p.add_argument("checkpoint", help="checkpoint file from a previous run")
    p.add_argument("dataset", help="delimited dataset dump (e.g. a run's test_data.csv)")
    p.add_argument("--k", type=int, default=50, help="MC sample count (default 50)")
    _add_common(p)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    log = (lambda *a, **k: None) if args.quiet else print
    try:
        if args.command == "run":
            runner.run(args.config, seed=args.seed, out_dir=args.out_dir,
                       quiet=args.quiet, log=log)
            return 0
        if args.command == "compare":
            _, failures = runner.compare(args.configs, seed=args.seed,
                                         out_dir=args.out_dir, quiet=args.quiet,
                                         log=print)
            return 1 if failures else 0
        if args.command == "kp-sweep":
            runner.kp_sweep(args.config, args.kp, args.fraction, seed=args.seed,
                            out_dir=args.out_dir, quiet=args.quiet, log=log)
            return 0
        summary = runner.eval_checkpoint(args.checkpoint, args.dataset, args.k,
                                         seed=args.seed if args.seed is not None else 0,
                                         out_dir=args.out_dir)
        c = summary.counts
        print(f"checkpoint_epoch = {summary.checkpoint_epoch}")
        print(f"dropout_rate = {summary.dropout_rate!r}")
        print(f"mc_samples = {summary.mc_samples}")
        print(f"test_accuracy = {summary.test_accuracy!r}")
        print(f"mean_uncertainty_threshold = {summary.mean_threshold!r}")
        print(f"pavpu_at_mean = {summary.pavpu_mean!r}")
        print(f"counts = n_iu:{c.n_iu} n_ac:{c.n_ac} n_ic:{c.n_ic} n_au:{c.n_au}")
        return 0
    except (ConfigError, ParseError, UsageError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except Exception as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
