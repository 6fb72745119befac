"""Command-line entry point: fibersphere {simulate,analyze,fit,figure}."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv
from pydantic import ValidationError

from . import __version__
from .system.errors import (
    EXIT_IO,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_VALIDATION,
    CountOverflowError,
    InconsistentSpectraError,
    RecordFormatError,
    SingularityError,
    SpectrumPointError,
)
from .system.logging_config import setup_logging
from .system.pipeline import CommandResult, cmd_analyze, cmd_figure, cmd_fit, cmd_simulate
from .system.run_config import RunConfig, load_config

logger = logging.getLogger('Cli')


def _add_run_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="Override the config seed")
    parser.add_argument("--out", type=Path, default=None, help="Output directory (overrides config output_dir)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fibersphere",
        description="Simulate and analyze polarization-resolved transmission of a fiber-coupled microsphere.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-dir", type=Path, default=None, help="Directory for log files")
    parser.add_argument("--quiet", action="store_true", help="Do not print log or output paths")
    sub = parser.add_subparsers(dest="command", required=True)

    simulate = sub.add_parser("simulate", help="Simulate a frequency sweep of six-projection counts")
    simulate.add_argument("config", type=Path, help="JSON run config")
    _add_run_options(simulate)

    analyze = sub.add_parser("analyze", help="Extract transmittance, phase and purity spectra from a record")
    analyze.add_argument("record", type=Path, help="Sweep record CSV")
    analyze.add_argument("--config", type=Path, required=True, help="JSON run config")
    _add_run_options(analyze)

    fit = sub.add_parser("fit", help="Fit a transmittance spectrum or a gap series")
    fit.add_argument("spectrum", type=Path, help="Transmittance spectrum CSV or gap series CSV")
    fit.add_argument("--phase", type=Path, default=None, help="Phase spectrum CSV for a joint fit")
    fit.add_argument("--record", type=Path, default=None, help="Sweep record CSV for counting-noise weights")
    fit.add_argument("--config", type=Path, required=True, help="JSON run config")
    _add_run_options(fit)

    figure = sub.add_parser("figure", help="Write plot-ready data bundles")
    figure.add_argument("kind", choices=("fig2", "fig3"))
    figure.add_argument("--config", type=Path, required=True, help="JSON run config")
    _add_run_options(figure)
    return parser


def _load(args: argparse.Namespace) -> RunConfig:
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, output_dir=args.out)


def _dispatch(args: argparse.Namespace) -> CommandResult:
    config = _load(args)
    if args.command == "simulate":
        return cmd_simulate(config)
    if args.command == "analyze":
        return cmd_analyze(args.record, config)
    if args.command == "fit":
        return cmd_fit(args.spectrum, config, phase_path=args.phase, record_path=args.record)
    return cmd_figure(args.kind, config)


def _exit_code(exc: BaseException) -> Optional[int]:
    if isinstance(exc, RecordFormatError):
        return EXIT_IO
    if isinstance(exc, (InconsistentSpectraError, CountOverflowError, SingularityError, SpectrumPointError)):
        return EXIT_NUMERICAL
    if isinstance(exc, (ValidationError, ValueError)):
        return EXIT_VALIDATION
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (RuntimeError, ArithmeticError)):
        return EXIT_NUMERICAL
    return None


def run(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    load_dotenv()
    setup_logging(args.log_dir, quiet=args.quiet)

    try:
        result = _dispatch(args)
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        logger.error("%s failed: %s", args.command, exc, exc_info=code != EXIT_VALIDATION)
        print(f"error: {exc}", file=sys.stderr)
        return code

    if not args.quiet:
        for name, path in result.outputs.items():
            print(f"{name}: {path}")
    if result.summary:
        logger.info("%s summary: %s", args.command, json.dumps(result.summary, default=str, sort_keys=True))
    if not result.converged:
        logger.warning("%s finished without convergence", args.command)
        print("warning: optimizer did not converge", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
