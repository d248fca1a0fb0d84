from __future__ import annotations

import argparse
import logging
import os
from pathlib import Path
import sys

from dotenv import dotenv_values

from eigenmax.core.utils import THREAD_ENV_VARS


# BLAS reads its thread count when numpy is first imported, so this runs before
# anything that imports numpy.
def _configure_threads_early(argv: list[str]) -> None:
    threads: str | None = None
    config_file: str | None = None
    for i, arg in enumerate(argv):
        if arg in {"--threads", "--config"} and i + 1 < len(argv):
            value = argv[i + 1]
        elif arg.startswith(("--threads=", "--config=")):
            value = arg.split("=", 1)[1]
        else:
            continue
        if arg.startswith("--threads"):
            threads = value
        else:
            config_file = value
    if threads is None and config_file and Path(config_file).is_file():
        threads = dotenv_values(config_file).get("threads")
    if threads is None or not threads.strip().isdigit():
        threads = "1"
    for name in THREAD_ENV_VARS:
        os.environ[name] = threads.strip()


_configure_threads_early(sys.argv)

from rich import print as rprint
from rich.markup import escape

from eigenmax.cli.commands import CommandRegistry
from eigenmax.core import __version__
from eigenmax.core.config import RunConfig, unflatten_keys
from eigenmax.core.exceptions import ConfigError, EigenmaxError, ExitCode
from eigenmax.core.utils import configure_logging, logger


def parse_arguments(argv: list[str] | None = None) -> argparse.Namespace:
    registry = CommandRegistry()
    parser = argparse.ArgumentParser(
        prog="eigenmax",
        description="Maximize normalized Laplace eigenvalues over densities and "
        "certify the results against exact round-sphere formulas.",
        epilog=registry.get_help_text(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument(
        "command",
        choices=registry.names(),
        metavar="COMMAND",
        help="Command to run (see the list below).",
    )
    parser.add_argument(
        "--config",
        type=Path,
        metavar="FILE",
        help="Run file of key=value lines; dotted keys address nested groups.",
    )
    parser.add_argument(
        "--output-dir",
        type=Path,
        metavar="DIR",
        help="Directory for reports and CSV artifacts "
        "(overrides EIGENMAX_OUTPUT_DIR and the run file).",
    )
    parser.add_argument(
        "--format",
        choices=["text", "csv", "json"],
        dest="output_format",
        help="Console table format (default: text).",
    )
    parser.add_argument(
        "--threads",
        type=int,
        metavar="N",
        help="Threads for the linear algebra backend (default: 1).",
    )
    parser.add_argument("--log-file", type=Path, metavar="FILE", help="Append logs here.")
    parser.add_argument(
        "-v", "--verbose", action="store_true", help="Log solver details at DEBUG level."
    )
    parser.add_argument("--version", action="version", version=f"eigenmax {__version__}")

    run_group = parser.add_argument_group("Run overrides")
    run_group.add_argument("-k", type=int, metavar="K", help="Target eigenvalue index.")
    run_group.add_argument("--cap", type=float, metavar="C", help="Density cap.")
    run_group.add_argument(
        "--caps", metavar="C1,C2,...", help="Sweep over several caps (optimize)."
    )
    run_group.add_argument("--seed", type=int, metavar="S", help="Random seed.")
    run_group.add_argument(
        "--set",
        action="append",
        default=[],
        dest="settings",
        metavar="KEY=VALUE",
        help="Override any run key, e.g. --set ascent.tol_cert=1e-4. Repeatable.",
    )
    return parser.parse_args(argv)


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    flat: dict[str, str | None] = {}
    for item in args.settings:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"Expected KEY=VALUE, got {item!r}")
        flat[key.strip()] = value.strip()
    overrides: dict[str, object] = unflatten_keys(flat)
    overrides["command"] = args.command
    for name in ("output_dir", "output_format", "threads", "k", "cap", "caps", "seed"):
        if (value := getattr(args, name)) is not None:
            overrides[name] = value
    return overrides


def load_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig.load(args.config, **_overrides(args))


def run(argv: list[str] | None = None) -> int:
    args = parse_arguments(argv)
    configure_logging(args.log_file, logging.DEBUG if args.verbose else logging.INFO)
    try:
        config = load_config(args)
        command = CommandRegistry().find_command(config.command)
        assert command is not None
        logger.info("Running %s (seed %d)", command.name, config.seed)
        result = command.runner(config, sys.stdout)
    except EigenmaxError as e:
        logger.error("%s", e)
        rprint(f"[red]{type(e).__name__}: {escape(str(e))}[/]", file=sys.stderr)
        return int(e.exit_code)
    except KeyboardInterrupt:
        rprint("\n[dim]Interrupted[/]", file=sys.stderr)
        return int(ExitCode.INTERRUPTED)

    if result.note:
        rprint(f"[dim]{escape(result.note)}[/]", file=sys.stderr)
    for path in result.artifacts:
        logger.info("Wrote %s", path)
    if result.exit_code == ExitCode.NOT_CONVERGED:
        rprint(
            "[yellow]Run did not converge; see the report for details[/]", file=sys.stderr
        )
    elif result.exit_code == ExitCode.VERIFICATION_FAILED:
        rprint("[red]Index verification failed[/]", file=sys.stderr)
    return int(result.exit_code)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
