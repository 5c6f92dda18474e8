"""Command-line entry point: ``relbohm run|validate|list-scenarios``."""
from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .scenarios import (
    EXIT_CONFIG,
    EXIT_OK,
    OUTPUT_ENV,
    SCENARIOS,
    ConfigError,
    NumericalFailure,
    load_config,
    run_scenario,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="relbohm",
        description="Relativistic Bohmian trajectory and ensemble scenarios.",
        epilog=f"The output directory may also be set with ${OUTPUT_ENV} (overridden by --out).",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario from a JSON config or manifest")
    run.add_argument("config", help="path to a JSON config (or an emitted manifest.json)")
    run.add_argument("--out", help="output directory")
    run.add_argument("--seed", type=int, help="override numerics.seed")
    run.add_argument("--threads", type=int, help="override numerics.threads")

    val = sub.add_parser("validate", help="check a config and print the resolved form")
    val.add_argument("config")

    sub.add_parser("list-scenarios", help="list available scenarios")
    return parser


def _report_config_error(exc: ConfigError) -> int:
    print(f"relbohm: invalid configuration ({len(exc.errors)} problem(s)):", file=sys.stderr)
    for msg in exc.errors:
        print(f"  - {msg}", file=sys.stderr)
    return EXIT_CONFIG


def _load(path, seed=None, threads=None):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"config: invalid JSON ({exc})"]) from None
    if isinstance(raw, dict) and "resolved_config" in raw:
        raw = raw["resolved_config"]
    if isinstance(raw, dict) and (seed is not None or threads is not None):
        numerics = dict(raw.get("numerics") or {})
        if seed is not None:
            numerics["seed"] = seed
        if threads is not None:
            numerics["threads"] = threads
        raw = {**raw, "numerics": numerics}
    from .scenarios import parse_config

    return parse_config(raw)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "list-scenarios":
        for name, text in SCENARIOS.items():
            print(f"{name:14s} {text}")
        return EXIT_OK
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(json.dumps(cfg.resolved, indent=2, sort_keys=True))
            return EXIT_OK
        cfg = _load(args.config, args.seed, args.threads)
        manifest = run_scenario(cfg, args.out)
    except ConfigError as exc:
        return _report_config_error(exc)
    except NumericalFailure as exc:
        print(f"relbohm: {cfg.scenario} failed: {exc}", file=sys.stderr)
        return exc.code
    except OSError as exc:
        print(f"relbohm: {exc}", file=sys.stderr)
        return 1
    print(f"relbohm: wrote {len(manifest['outputs'])} file(s) for scenario {cfg.scenario}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
