"""Main entry point for the higgsbal command line."""

import argparse
import sys
from typing import Any, Callable, Sequence

from pydantic import ValidationError

from higgsbal.components.asymptotics import cmd_asymptotics
from higgsbal.components.balance import cmd_balance
from higgsbal.components.models import RunConfig, RunReport
from higgsbal.components.validate import cmd_validate
from higgsbal.components.weight import cmd_weight
from higgsbal.config import (
    EXIT_CHECK_FAILED,
    EXIT_DEGENERATE,
    EXIT_INPUT_ERROR,
    get_package_version,
    logger,
)
from higgsbal.core.bergman import NotBalancedError
from higgsbal.validation import ConfigValidationError

COMMANDS: dict[str, Callable[[RunConfig], RunReport]] = {
    "balance": cmd_balance,
    "weight": cmd_weight,
    "asymptotics": cmd_asymptotics,
    "validate": cmd_validate,
}

# (flag destination, config field)
OVERRIDES = (
    ("k", "k"),
    ("k_range", "k_range"),
    ("ell", "ell"),
    ("tol", "tol"),
    ("max_iter", "max_iter"),
    ("seed", "seed"),
    ("out", "out"),
    ("quad", "quadrature"),
)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per command."""
    parser = argparse.ArgumentParser(
        prog="higgsbal", description="Balanced metrics for twisted Higgs bundles on P^1."
    )
    parser.add_argument("--version", action="version", version=get_package_version())
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        summary = (func.__doc__ or "").strip().splitlines()[0]
        sub = subparsers.add_parser(name, help=summary, description=summary)
        sub.add_argument("--config", required=True, help="Path to the JSON run configuration.")
        levels = sub.add_mutually_exclusive_group()
        levels.add_argument("--k", type=int, default=None, help="Single level k.")
        levels.add_argument("--k-range", default=None, help="Inclusive level range A:B.")
        sub.add_argument("--ell", default=None, help="Rational constant l, e.g. 1 or 1/2.")
        sub.add_argument("--tol", type=float, default=None, help="Convergence tolerance.")
        sub.add_argument("--max-iter", type=int, default=None, help="Maximal t-steps.")
        sub.add_argument("--seed", type=int, default=None, help="Seed of sampled points.")
        sub.add_argument("--out", default=None, help="Output directory.")
        sub.add_argument("--quad", default=None, help="Quadrature orders NPOLAR:NAZ.")
    return parser


def load_config(args: argparse.Namespace) -> RunConfig:
    """Loads the configuration file and applies the command line overrides.

    Arguments:
        args (argparse.Namespace): Parsed arguments.

    Returns:
        RunConfig: The effective configuration.

    Raises:
        ConfigValidationError: If the file or an override is invalid.
    """
    config = RunConfig.from_file(args.config)
    updates: dict[str, Any] = {
        field: getattr(args, dest) for dest, field in OVERRIDES if getattr(args, dest) is not None
    }
    if not updates:
        return config
    if "k" in updates:
        updates["k_range"] = None
    elif "k_range" in updates:
        updates["k"] = None
    data = config.model_dump()
    data.update(updates)
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        error = e.errors()[0]
        field = str(error["loc"][0]) if error["loc"] else "config"
        raise ConfigValidationError(f"--{field.replace('_', '-')}: {error['msg']}") from e


def main(argv: Sequence[str] | None = None) -> int:
    """Runs a command and returns its exit code.

    Exit codes: 0 success, 1 invalid input, 2 degenerate iteration, 3 iteration limit,
    4 failed asymptotic check.

    Arguments:
        argv (Sequence[str] | None): Arguments, sys.argv when omitted.

    Returns:
        int: The exit code.
    """
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        # argparse exits with 2, which is reserved for degenerate iterations
        return EXIT_INPUT_ERROR if e.code not in (0, None) else 0
    try:
        config = load_config(args)
        report = COMMANDS[args.command](config)
    except NotBalancedError as e:
        logger.error("%s failed: %s", args.command, e)
        print(f"[error] {e}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except ArithmeticError as e:
        # indefinite Hermitian forms and underflowing sections
        logger.error("%s degenerated: %s", args.command, e)
        print(f"[degenerate] {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as e:
        # configuration, instance, level, subgroup and range errors are all ValueErrors
        logger.error("%s failed: %s", args.command, e)
        print(f"[error] {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    print(f"[{args.command}] exit {report.exit_code}: {report.verdicts}")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
