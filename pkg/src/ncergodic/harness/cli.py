"""Command-line entry point: ``ncergodic run|verify|scenario``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from ..errors import ConfigError, ResourceError
from .config import load_config
from .runner import EXIT_CHECK, EXIT_CONFIG, EXIT_OK, EXIT_RESOURCE, run_experiment
from .scenarios import builtin_config, builtin_names


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncergodic", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one configured experiment")
    run.add_argument("--config", required=True, help="JSON scenario file or builtin:<name>")
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--seed", type=_u64, help="override the configured seed")
    run.add_argument("--no-oracle", action="store_true", help="skip brute-force sphere enumeration")

    verify = sub.add_parser("verify", help="run acceptance checks")
    verify.add_argument("--suite", choices=["all", "identities", "orlicz", "convergence"], default="all")

    scen = sub.add_parser("scenario", help="inspect builtin scenarios")
    scen_sub = scen.add_subparsers(dest="action", required=True)
    scen_sub.add_parser("list", help="list builtin scenario names")
    show = scen_sub.add_parser("show", help="print a builtin scenario config")
    show.add_argument("name")
    return parser


def _cmd_run(args) -> int:
    try:
        if args.config.startswith("builtin:"):
            cfg = builtin_config(args.config.split(":", 1)[1])
        else:
            cfg = load_config(args.config)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        report = run_experiment(cfg, args.out, oracle=not args.no_oracle)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ResourceError as exc:
        print(f"resource guard: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    print(report.summary())
    for c in report.failures:
        print(f"failed: {c.phase}/{c.name}", file=sys.stderr)
    return report.exit_code


def _cmd_verify(args) -> int:
    from .verify import CRITERIA, SUITES

    ok = True
    for k in SUITES[args.suite]:
        result = CRITERIA[k]()
        print(result.line(), flush=True)
        ok = ok and result.passed
    return EXIT_OK if ok else EXIT_CHECK


def _cmd_scenario(args) -> int:
    if args.action == "list":
        for name in builtin_names():
            cfg = builtin_config(name)
            print(f"{name}\tkind={cfg.kind} m={cfg.m} n_max={cfg.n_max}")
        return EXIT_OK
    try:
        print(json.dumps(builtin_config(args.name).to_dict(), indent=2))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "verify": _cmd_verify, "scenario": _cmd_scenario}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
