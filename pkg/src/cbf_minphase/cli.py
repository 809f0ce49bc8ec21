"""CLI for CBF safety-filter simulations."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, List, Optional

from .config import RunConfig, apply_overrides, load_config, log_level, parse_config, parse_value
from .errors import CbfMinPhaseError
from .runner import EXIT_ERROR, run_scenario, run_sweep
from .scenarios import list_scenarios
from .verify import build_verify_report, run_suites

logger = logging.getLogger("cbf-minphase.cli")


def _parse_values(value: str) -> List[Any]:
    text = value.strip()
    if not text:
        return []
    parsed = parse_value(text)
    if isinstance(parsed, list):
        return parsed
    return [parse_value(item.strip()) for item in text.split(",") if item.strip()]


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = parse_config({"scenario": args.scenario})
    overrides = list(args.set or [])
    if args.out:
        overrides.append(f"output_dir={json.dumps(args.out)}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    return apply_overrides(config, overrides)


def _add_run_arguments(parser: argparse.ArgumentParser) -> None:
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="JSON run configuration")
    source.add_argument("--scenario", help="Scenario name with default parameters")
    parser.add_argument("--out", help="Output directory (overrides output_dir)")
    parser.add_argument(
        "--set", action="append", metavar="KEY=VALUE", help="Override a parameter path, e.g. params.gamma=2"
    )
    parser.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="CBF safety filters and the internal dynamics they leave behind")
    subparsers = parser.add_subparsers(dest="command", required=True)

    run_parser = subparsers.add_parser("run", help="Simulate one scenario and write trajectory + summary")
    _add_run_arguments(run_parser)

    sweep_parser = subparsers.add_parser("sweep", help="Run a scenario once per parameter value")
    _add_run_arguments(sweep_parser)
    sweep_parser.add_argument("--param", required=True, help="Parameter path to vary, e.g. params.gamma")
    sweep_parser.add_argument("--values", required=True, help="JSON list or comma-separated values")

    verify_parser = subparsers.add_parser("verify", help="Run the randomized property suites")
    verify_parser.add_argument("--seed", type=int, default=0)

    subparsers.add_parser("list-scenarios", help="List scenarios, wirings and defaults")
    return parser


def _emit(result: Any) -> None:
    print(json.dumps(result, indent=2))


def cmd_run(config: RunConfig) -> int:
    result = run_scenario(config)
    exit_code = result.pop("exit_code")
    _emit(result)
    return exit_code


def cmd_sweep(config: RunConfig, param: str, values: List[Any]) -> int:
    if not values:
        print("error: sweep needs at least one value", file=sys.stderr)
        return EXIT_ERROR
    result = run_sweep(config, param, values)
    exit_code = result.pop("exit_code")
    _emit(result)
    return exit_code


def cmd_verify(seed: int) -> int:
    report = build_verify_report(seed, run_suites(seed))
    _emit(report)
    return 0 if report["passed"] else 1


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=log_level(), format="%(levelname)s %(name)s: %(message)s")
    logger.debug(f"command {args.command}")

    try:
        if args.command == "run":
            return cmd_run(_load_run_config(args))
        if args.command == "sweep":
            return cmd_sweep(_load_run_config(args), args.param, _parse_values(args.values))
        if args.command == "verify":
            return cmd_verify(args.seed)
        _emit({"scenarios": list_scenarios()})
        return 0
    except (CbfMinPhaseError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
