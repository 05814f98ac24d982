"""Command line entry point: ``cvgibbs run|validate|schema``.

Exit codes: 0 success, 1 a scientific invariant failed, 2 invalid config,
3 dimension cap exceeded, 4 numerical failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from numpy.linalg import LinAlgError

from .config import CONFIG_SCHEMA, load_config, validate_config
from .errors import ConfigError, DimensionCapError, NumericalError
from .experiments import emit_report, resolve_threads, run_experiment

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_SCHEMA = 2
EXIT_DIMENSION = 3
EXIT_NUMERICAL = 4
EXIT_IO = 5


def _formats(text):
    items = [t.strip() for t in text.split(",") if t.strip()]
    bad = [t for t in items if t not in ("csv", "json")]
    if bad or not items:
        raise argparse.ArgumentTypeError(f"formats must be a subset of csv,json (got '{text}')")
    return tuple(dict.fromkeys(items))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvgibbs", description="Bosonic Gibbs-sampler experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the scenario described by a config file")
    run.add_argument("config")
    run.add_argument("--out", default=None, help="output directory (default: config output.dir or ./results)")
    run.add_argument("--threads", type=int, default=None, help="worker threads for sweeps")
    run.add_argument("--format", type=_formats, default=None, help="comma-separated subset of csv,json")
    val = sub.add_parser("validate", help="check a config against the schema")
    val.add_argument("config")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def _load(path):
    try:
        config = load_config(path)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return None, EXIT_IO
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_SCHEMA
    try:
        validate_config(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None, EXIT_SCHEMA
    return config, EXIT_OK


def cmd_run(args) -> int:
    config, code = _load(args.config)
    if config is None:
        return code
    try:
        threads = resolve_threads(args.threads)
        report = run_experiment(config, threads)
    except LinAlgError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except DimensionCapError as exc:
        print(f"error: dimension cap exceeded: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except NumericalError as exc:
        print(f"error: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    output = config.get("output", {})
    out_dir = args.out or output.get("dir", "results")
    formats = args.format or tuple(output.get("formats", ("csv", "json")))
    try:
        paths = emit_report(report, out_dir, formats)
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_IO
    for name, ok in report.checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    for p in paths:
        print(f"wrote {p}")
    return EXIT_OK if report.passed else EXIT_INVARIANT


def cmd_validate(args) -> int:
    config, code = _load(args.config)
    if config is not None:
        print(f"{args.config}: valid ({config['scenario']})")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return EXIT_OK
    if args.command == "validate":
        return cmd_validate(args)
    return cmd_run(args)


if __name__ == "__main__":
    sys.exit(main())
