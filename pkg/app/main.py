import argparse
import logging
import sys
from pathlib import Path

from app.core.config import settings
from app.core.exceptions import ConfigError, FracLabError
from app.core.logging import configure_logging
from app.schemas.experiment import Command
from app.services.experiment_service import load_config, run

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fraclab",
        description="Mittag-Leffler solvers for time-fractional diffusion, with L1 and Talbot oracles.",
    )
    parser.add_argument("command", choices=[c.value for c in Command])
    parser.add_argument("config", type=Path, help="experiment config, 'key = value' per line")
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default {settings.OUTPUT_DIR})")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for grid evaluations")
    parser.add_argument("--log-level", default=None, help="overrides FRACLAB_LOG_LEVEL")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    configure_logging(args.log_level)

    if args.threads is not None and args.threads < 1:
        logger.error(f"[CLI] --threads must be at least 1, got {args.threads}")
        return EXIT_USAGE
    try:
        cfg = load_config(args.config, args.command)
    except OSError as exc:
        logger.error(f"[CLI] cannot read {args.config}: {exc}")
        return EXIT_USAGE
    except ConfigError as exc:
        for message in exc.errors:
            logger.error(f"[CLI] {args.config}: {message}")
        return EXIT_USAGE

    try:
        report = run(cfg, args.out or Path(settings.OUTPUT_DIR), threads=args.threads)
    except FracLabError:
        logger.exception(f"[CLI] {cfg.command.value} aborted")
        return EXIT_FAIL

    for check in report.checks:
        print(check.describe())
    return EXIT_PASS if report.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
