"""Command line front end: ``loops <experiment> --config <file> [options]``.

Exit codes: 0 when every declared tolerance passes, 1 on a tolerance
failure, 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys

from .errors import InvalidConfig, LoopmeasureError, UnknownExperiment
from .experiments import (
    REGISTRY,
    ExperimentConfig,
    parse_config_text,
    read_records,
    report,
    run,
)
from .sharding import default_jobs


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="loops",
        description="Monte Carlo experiments on the conformally invariant loop measure",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in sorted(REGISTRY):
        p = sub.add_parser(name, help=f"run the {name} experiment")
        _add_run_args(p)
    rep = sub.add_parser("report", help="summarize persisted run records")
    rep.add_argument("--records", required=True, help="path to a records.jsonl file")
    rep.add_argument("--out", required=True, help="output directory for the summary")
    return parser


def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None, help="output directory for records and artifacts")
    p.add_argument("--jobs", type=int, default=None, help="worker count (default LOOPS_JOBS or 1)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config key (repeatable)")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0

    if args.command == "report":
        try:
            records = read_records(args.records)
            paths = report(records, args.out)
        except (OSError, ValueError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for p in paths:
            print(p)
        return 0

    overrides: dict = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                overrides.update(parse_config_text(fh.read()))
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 2
    for item in args.set:
        if "=" not in item:
            print(f"error: --set needs KEY=VALUE, got {item!r}", file=sys.stderr)
            return 2
        key, _, val = item.partition("=")
        overrides[key.strip()] = val.strip()

    jobs = args.jobs if args.jobs is not None else default_jobs()
    config = ExperimentConfig(
        name=args.command, params=overrides, out_dir=args.out, seed=args.seed, jobs=jobs
    )
    try:
        record = run(config)
    except (InvalidConfig, UnknownExperiment) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LoopmeasureError as exc:
        print(f"experiment error: {exc}", file=sys.stderr)
        return 1

    print(json.dumps({k: record[k] for k in ("experiment", "estimates", "passes", "notes")}, indent=2))
    return 0 if all(record["passes"].values()) else 1


if __name__ == "__main__":
    sys.exit(main())
