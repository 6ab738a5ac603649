"""Command-line entry point: ``fedpls run | sweep | compare | plot``."""
from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Sequence

from ..errors import FedPlsError
from .analysis import compare_trends, read_metrics
from .config import RunConfig, apply_overrides, load_config, parse_assignments, profile
from .experiment import METRICS_FILE, run_experiment
from .plot import emit_plot

log = logging.getLogger("fedpls")

# shortcut flag -> dotted config key
SHORTCUTS = {
    "seed": "run.seed",
    "episodes": "run.episodes",
    "agent": "run.agent",
    "mode": "federation.mode",
    "xi": "federation.xi",
    "cells": "environment.cell_count",
    "users": "environment.users_per_cell",
    "slots": "environment.slots_per_episode",
    "repetitions": "run.repetitions",
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--profile", default="desk", help="base profile: desk or paper (default: desk)")
    p.add_argument("--config", help="INI file applied on top of the profile")
    p.add_argument("--set", dest="assignments", action="append", default=[], metavar="SEC.KEY=VALUE",
                   help="override one config key; repeatable")
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int)
    p.add_argument("--agent", choices=("dqn", "reinforce"))
    p.add_argument("--mode", choices=("federated", "distributed"))
    p.add_argument("--xi", type=int, help="aggregation period in slots")
    p.add_argument("--cells", type=int, help="number of cells B")
    p.add_argument("--users", type=int, help="users per cell L")
    p.add_argument("--slots", type=int, help="slots per episode T")
    p.add_argument("--repetitions", type=int)
    p.add_argument("--step-rows", action="store_true", help="also write one CSV row per slot")


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Profile, then config file, then ``--set``, then shortcut flags."""
    config = profile(args.profile)
    if args.config:
        config = load_config(args.config, config)
    overrides: dict[str, object] = dict(parse_assignments(args.assignments))
    for flag, key in SHORTCUTS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.step_rows:
        overrides["run.step_rows"] = True
    user_key = "environment.users_per_cell"
    cell_key = "environment.cell_count"
    if (user_key in overrides or cell_key in overrides) and "federation.user_counts" not in overrides:
        # a stale per-cell list would no longer match the new shape
        overrides["federation.user_counts"] = ()
    return apply_overrides(config, overrides)


def _summary(result) -> str:
    series = result.series("network_secrecy_smoothed")
    return (
        f"episodes={len(result.episodes)} rounds={len(result.rounds)} "
        f"final_smoothed_secrecy={series[-1]:.4f} max_power_W={result.max_power:.4f}"
    )


def cmd_run(args: argparse.Namespace) -> int:
    config = resolve_config(args)
    out = Path(args.out)
    result = run_experiment(config, out)
    print(f"{out / METRICS_FILE}: {_summary(result)}")
    return 0


def _sweep_job(job: tuple[RunConfig, str]) -> str:
    config, out = job
    result = run_experiment(config, out)
    return f"{Path(out) / METRICS_FILE}: {_summary(result)}"


def cmd_sweep(args: argparse.Namespace) -> int:
    base = resolve_config(args)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise FedPlsError("--values needs at least one entry")
    # validate every point before any training starts
    jobs = []
    root = Path(args.out)
    for value in values:
        overrides = {args.param: value}
        if args.param in ("environment.users_per_cell", "environment.cell_count"):
            overrides["federation.user_counts"] = ()
        point = apply_overrides(base, overrides)
        for rep in range(point.run.repetitions):
            seed = point.run.seed + rep
            cfg = apply_overrides(point, {"run.seed": seed})
            jobs.append((cfg, str(root / f"{args.param}={value}" / f"seed_{seed}")))
    if args.workers > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            lines = list(pool.map(_sweep_job, jobs))
    else:
        lines = [_sweep_job(j) for j in jobs]
    for line in lines:
        print(line)
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    report = compare_trends(args.a, args.b, args.metric, args.final_fraction)
    print(report)
    return 0


def cmd_plot(args: argparse.Namespace) -> int:
    series, labels = [], []
    for k, path in enumerate(args.csv):
        columns = read_metrics(path)
        if args.column not in columns:
            raise FedPlsError(f"{path} has no column {args.column!r}")
        series.append(columns[args.column])
        labels.append(args.labels[k] if args.labels and k < len(args.labels) else "")
    emit_plot(series, labels, args.out, title=args.title, y_label=args.column)
    print(args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedpls", description="Federated power control for physical-layer secrecy.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log training progress")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="train one seeded experiment")
    _add_config_flags(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="vary one config key over a list of values and repetitions")
    _add_config_flags(p)
    p.add_argument("--param", required=True, help="dotted key, e.g. federation.xi")
    p.add_argument("--values", required=True, help="comma-separated values, e.g. 10,100,1000")
    p.add_argument("--out", required=True, help="root directory; one subdirectory per value and seed")
    p.add_argument("--workers", type=int, default=1, help="parallel processes for independent runs")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="trend report between two sets of metrics CSVs")
    p.add_argument("--a", nargs="+", required=True, help="metrics CSVs of set A")
    p.add_argument("--b", nargs="+", required=True, help="metrics CSVs of set B")
    p.add_argument("--metric", default="network_secrecy_sum")
    p.add_argument("--final-fraction", type=float, default=0.1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("plot", help="render metrics CSV columns to SVG")
    p.add_argument("csv", nargs="+", help="metrics CSV files, one series each")
    p.add_argument("--out", required=True, help="SVG output path")
    p.add_argument("--column", default="network_secrecy_smoothed")
    p.add_argument("--labels", nargs="*", default=[])
    p.add_argument("--title", default="")
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (FedPlsError, OSError, KeyError) as exc:
        print(f"fedpls: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
