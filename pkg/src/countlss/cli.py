"""
Command-line entry point.

Usage::

    countlss diagnose --config run.cfg
    countlss cluster  --config run.cfg [--seed N]
    countlss fit      --config run.cfg [--workers N] [--resume] [--families Poisson,NegBinomial]
    countlss evaluate --config run.cfg [--holdout DAYS]
    countlss forecast --config run.cfg --start d_1942 --end d_1942

Exit codes: 0 success, 2 invalid input or configuration, 3 missing
artifact from an earlier stage, 4 numerical failure (including failed
fits), 1 anything else.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .errors import (ConvergenceError, CountlssError, DomainError, FormatError,
                     MissingArtifactError, NumericalError, RangeError)

EXIT_FORMAT = 2
EXIT_MISSING = 3
EXIT_NUMERICAL = 4


def _families(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="flat key = value configuration file")
    common.add_argument("--seed", type=int, help="override the k-means seed")
    common.add_argument("--workers", type=int, help="parallel fit processes")
    common.add_argument("--families", type=_families, help="comma-separated family names")
    common.add_argument("--holdout", type=int, dest="holdout_days",
                        help="days held out at the end of the window")

    parser = argparse.ArgumentParser(prog="countlss", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("diagnose", parents=[common], help="dispersion and zero-fraction tables")
    sub.add_parser("cluster", parents=[common], help="item features and k-means clusters")
    fit = sub.add_parser("fit", parents=[common], help="fit every (cluster, family) pair")
    fit.add_argument("--resume", action="store_true", help="skip fits already on disk")
    sub.add_parser("evaluate", parents=[common], help="pinball report on the holdout days")
    fc = sub.add_parser("forecast", parents=[common], help="quantile CSV for a day range")
    fc.add_argument("--start", required=True, help="first target day (d_<k> or YYYY-MM-DD)")
    fc.add_argument("--end", required=True, help="last target day")
    return parser


def _print_summary(summary: dict, stream):
    for key, value in summary.items():
        if key == "failed":
            value = len(value)
        if key == "report":
            continue
        print(f"{key}: {value}", file=stream)


def run(args) -> int:
    cfg = pipeline.load_config(args.config, seed=args.seed, workers=args.workers,
                               families=args.families, holdout_days=args.holdout_days)
    if args.command == "diagnose":
        summary = pipeline.run_diagnose(cfg)
    elif args.command == "cluster":
        summary = pipeline.run_cluster(cfg)
    elif args.command == "fit":
        summary = pipeline.run_fit(cfg, resume=args.resume)
    elif args.command == "evaluate":
        summary = pipeline.run_evaluate(cfg)
        report = summary["report"]
        for s in report.sources:
            print(f"{s:<15s} avg={report.avg_loss[s]:.5f} "
                  f"improvement={report.improvement_pct.get(s, float('nan')):.2f}%")
    else:
        summary = pipeline.run_forecast(cfg, args.start, args.end)
    _print_summary(summary, sys.stdout)
    if summary.get("failed"):
        print(f"{len(summary['failed'])} fit(s) failed", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return run(args)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (FormatError, FileNotFoundError, RangeError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (NumericalError, ConvergenceError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CountlssError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
