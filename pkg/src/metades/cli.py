"""Command-line entry point: ``metades run --config exp.json [overrides]``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .harness import SCENARIOS, DatasetSpec, ExperimentConfig, read_summary, run_experiment


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="metades", description="Meta-learned dynamic ensemble selection experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run replications and write the report CSVs")
    run.add_argument("--config", help="JSON file mirroring ExperimentConfig")
    run.add_argument("--dataset", action="append", default=None,
                     help="'banana', 'lithuanian' or a CSV path; repeatable, replaces the config's list")
    run.add_argument("--csv-header", action="store_true", help="CSV datasets given with --dataset have a header row")
    run.add_argument("--scenario", action="append", choices=SCENARIOS, default=None,
                     help="repeatable; replaces the config's scenarios")
    run.add_argument("--k", type=int, dest="K")
    run.add_argument("--kp", type=int, dest="Kp")
    run.add_argument("--hc", type=float, dest="h_C")
    run.add_argument("--pool-size", type=int, dest="M")
    run.add_argument("--reps", type=int, dest="replications")
    run.add_argument("--seed", type=int)
    run.add_argument("--out")
    run.add_argument("--trace", action="store_true", default=None, help="also write per-query trace.csv")
    run.add_argument("--empty-meta", choices=("error", "fallback"), dest="empty_meta",
                     help="what to do when a replication has no low-consensus meta-training queries")
    run.add_argument("-q", "--quiet", action="store_true")
    return ap


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    base = json.loads(Path(args.config).read_text(encoding="utf-8")) if args.config else {}
    cfg = ExperimentConfig.from_dict(base)
    overrides = {k: getattr(args, k) for k in
                 ("K", "Kp", "h_C", "M", "replications", "seed", "out", "trace", "empty_meta")
                 if getattr(args, k) is not None}
    if args.dataset:
        overrides["datasets"] = tuple(DatasetSpec.parse(d, args.csv_header) for d in args.dataset)
    if args.scenario:
        overrides["scenarios"] = tuple(dict.fromkeys(args.scenario))
    return dataclasses.replace(cfg, **overrides)


def _print_summary(path: Path):
    rows = read_summary(path)
    width = max(len(d) for d, _ in rows)
    for (d, t), (m, s) in rows.items():
        print(f"{d:<{width}}  {t:<8} {100 * m:6.2f} ({100 * s:5.2f})")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        cfg = config_from_args(args)
        progress = None if args.quiet else (lambda msg: print(msg, file=sys.stderr))
        run_experiment(cfg, progress=progress)
    except (OSError, ValueError, RuntimeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if not args.quiet:
        _print_summary(Path(cfg.out) / "summary.csv")
        print(f"report written to {cfg.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
