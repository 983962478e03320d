"""Command-line front end: run, validate, and list scenarios.

Exit codes: 0 success, 2 config error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .scenarios import (
    SCENARIOS,
    ParseError,
    SchemaError,
    SerializationError,
    builtin_config,
    parse_config,
    run_scenario,
    write_outputs,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bohm-ergo",
        description="Pilot-wave trajectory laboratory: equilibrium sampling, "
                    "guidance-flow integration and ergodicity diagnostics.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario config and write outputs")
    run.add_argument("config", help="path to a scenario config (JSON)")
    run.add_argument("--out", default=".", help="output directory (default: .)")
    run.add_argument("--seed", type=int, default=None,
                     help="override the config seed")
    run.add_argument("--threads", type=int, default=None,
                     help="worker count (default: BOHM_ERGO_THREADS or 1)")

    val = sub.add_parser("validate", help="check a config against the schema")
    val.add_argument("config", help="path to a scenario config (JSON)")

    sub.add_parser("scenarios", help="list built-in scenarios with defaults")
    return parser


def _load_config(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _resolve_threads(cli_value: int | None) -> int:
    if cli_value is not None:
        return max(1, cli_value)
    env = os.environ.get("BOHM_ERGO_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise SchemaError(f"BOHM_ERGO_THREADS must be an integer, got {env!r}")
    return 1


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        from dataclasses import replace
        cfg = replace(cfg, seed=args.seed)
    workers = _resolve_threads(args.threads)
    summary, artifacts = run_scenario(cfg, workers=workers)
    written = write_outputs(summary, artifacts, args.out)
    for path in written:
        print(path)
    if "summary_json" not in cfg.outputs:
        print(summary.to_json(), end="")
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    print(f"valid {cfg.scenario} config")
    return EXIT_OK


def _cmd_scenarios() -> int:
    listing = {name: builtin_config(name).to_jsonable() for name in SCENARIOS}
    print(json.dumps(listing, indent=2, sort_keys=True))
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "validate":
            return _cmd_validate(args)
        return _cmd_scenarios()
    except (ParseError, SchemaError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SerializationError, ArithmeticError, RuntimeError, ValueError) as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
