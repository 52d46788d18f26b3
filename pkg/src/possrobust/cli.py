"""Command-line entry point: ``possrobust <experiment> [options]``.

Exit codes: 0 success, 2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from .harness import EXPERIMENTS, ConfigError, DataError, parse_config, run_experiment, write_outputs

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="possrobust", description="Robust possibilistic inference experiments")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int)
        p.add_argument("--output", default=f"results/{name}", help="output directory")
        p.add_argument("--method", help="comma-separated methods, or 'all'")
        p.add_argument("--repeats", type=int)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--trace-repeats", type=int, dest="trace_repeats")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a parameter; VALUE is parsed as JSON")
        if name == "changepoint":
            p.add_argument("--data", help="CSV file with one observation per line")
    return parser


def _raw_config(args) -> dict:
    raw = {}
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot load config {args.config}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
        if raw.get("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {args.experiment!r}")
    raw["experiment"] = args.experiment
    for key in ("seed", "repeats", "trace_repeats"):
        if getattr(args, key) is not None:
            raw[key] = getattr(args, key)
    if args.method:
        raw["methods"] = args.method
    if getattr(args, "data", None):
        raw["data"] = args.data
    params = dict(raw.get("params") or {})
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            params[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            params[key.strip()] = value
    raw["params"] = params
    return raw


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            config = parse_config(_raw_config(args))
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)
        trace, summary = run_experiment(config, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    paths = write_outputs(config, trace, summary, args.output)
    for sweep in summary["results"]:
        head = "" if sweep["value"] is None else f"[{summary['sweep_param']}={sweep['value']}] "
        for m, met in sweep["methods"].items():
            parts = ", ".join(f"{k} mean={v['mean']:.6g}" for k, v in met.items())
            print(f"{head}{m}: {parts}")
    print(f"wrote {paths['trace'].parent} ({summary['wall_time_s']:.2f} s)")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
