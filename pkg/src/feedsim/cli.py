"""Command-line scenario runner.

Exit codes: 0 success, 2 configuration error, 3 infeasible scenario,
4 runtime failure. Reports are written atomically; a failed run leaves
no partial report behind.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import delivery, report, scenarios
from .config import ConfigError, load_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_RUNTIME = 4

CONFIG_DIR_ENV = "FEEDSIM_CONFIG_DIR"
SCENARIOS = ("playback", "cdn", "delivery", "uiae", "publish", "experiment", "full")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="feedsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for name in SCENARIOS:
        p = sub.add_parser(name, help=f"run the {name} pipeline")
        p.add_argument("--config", default=None, help="scenario config JSON (defaults ship built in)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default=None, help="output directory for report and series")
        p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")

    f = sub.add_parser("forecast", help="forecast a CSV series (slot,value header optional)")
    f.add_argument("--series", required=True, help="CSV file with one value per line or slot,value rows")
    f.add_argument("--method", choices=("moving-average", "seasonal-naive"), default="moving-average")
    f.add_argument("--window", type=int, default=12)
    f.add_argument("--horizon", type=int, default=6)
    f.add_argument("--period", type=int, default=288)

    c = sub.add_parser("compare", help="diff two report files")
    c.add_argument("report_a")
    c.add_argument("report_b")
    return parser


def _resolve_config(path: str | None) -> str | None:
    if path is not None:
        return path
    env_dir = os.environ.get(CONFIG_DIR_ENV)
    if env_dir:
        candidate = Path(env_dir) / "demo.json"
        if candidate.exists():
            return str(candidate)
    return None


def _run_scenario_command(args) -> int:
    loaded = load_config(_resolve_config(args.config), overrides=args.overrides)
    cfg = loaded.cfg
    seed = args.seed if args.seed is not None else cfg["seed"]
    out_dir = Path(args.out or cfg["out_dir"])
    sections, series = scenarios.run_scenario(cfg, args.command, seed=seed)
    doc = report.build_report(sections, loaded.config_hash, seed, loaded.overrides)
    report_path = out_dir / f"{args.command}_report.json"
    report.write_report(doc, report_path)
    if series:
        report.write_series_csv(series, out_dir / f"{args.command}_series.csv")
    print(f"report written to {report_path}")
    return EXIT_OK


def _run_forecast(args) -> int:
    raw = np.genfromtxt(args.series, delimiter=",", dtype=np.float64)
    values = raw[:, -1] if raw.ndim > 1 else raw
    values = values[~np.isnan(values)]
    model = delivery.ForecastModel(args.window, args.horizon, args.method, args.period)
    out = delivery.forecast(values, model)
    for i, (v, p) in enumerate(zip(out.values, out.day_percentiles)):
        print(f"{i},{v:.6g},{p:.2f}")
    return EXIT_OK


def _run_compare(args) -> int:
    a = report.load_report(args.report_a)
    b = report.load_report(args.report_b)
    print(json.dumps(report.compare_runs(a, b), sort_keys=True, indent=2))
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "forecast":
            return _run_forecast(args)
        if args.command == "compare":
            return _run_compare(args)
        return _run_scenario_command(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except scenarios.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except Exception as exc:  # noqa: BLE001
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
