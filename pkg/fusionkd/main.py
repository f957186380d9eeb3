"""Command-line entrypoint: train-teacher | distill | analyze | selfcheck."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional

# Allow running this file directly: `python fusionkd/main.py distill ...`
REPO_ROOT = Path(__file__).resolve().parents[1]
if str(REPO_ROOT) not in sys.path:
    sys.path.append(str(REPO_ROOT))

from pydantic import ValidationError

from fusionkd.logger import get_logger
from fusionkd.models.run_config import config_flags, load_run_config, render_config
from fusionkd.objects.errors import ConfigError, DataError, FusionKDError, NumericError
from fusionkd.workers.analyze_worker import cmd_analyze
from fusionkd.workers.command_names import (
    ANALYZE_COMMAND,
    DISTILL_COMMAND,
    SELFCHECK_COMMAND,
    TRAIN_TEACHER_COMMAND,
)
from fusionkd.workers.distill_worker import cmd_distill
from fusionkd.workers.selfcheck_worker import cmd_selfcheck
from fusionkd.workers.teacher_worker import cmd_train_teacher

EXIT_OK = 0

COMMAND_HELP: Dict[str, str] = {
    TRAIN_TEACHER_COMMAND: "Train the teacher network on cross-entropy only.",
    DISTILL_COMMAND: "Distill a student from a saved teacher with the configured fusion policy.",
    ANALYZE_COMMAND: "Build discrepancy-group tables, fusion-ratio grids and histograms from run dumps.",
    SELFCHECK_COMMAND: "Run the gradient, hypergradient, metric and data oracle suites.",
}


class _ConfigArgumentParser(argparse.ArgumentParser):
    """Usage errors are config errors (exit 1), not argparse's exit 2."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigError(f"{self.prog}: {message}")


def _build_parser() -> argparse.ArgumentParser:
    parser = _ConfigArgumentParser(
        description="Adaptive sample-wise knowledge-fusion distillation toolkit."
    )
    commands = parser.add_subparsers(dest="command", required=True)
    for name, help_text in COMMAND_HELP.items():
        command = commands.add_parser(name, help=help_text, description=help_text)
        command.add_argument("--config", default=None, help="Sectioned key = value config file.")
        for flag in config_flags():
            command.add_argument(
                f"--{flag}",
                dest=flag,
                default=argparse.SUPPRESS,
                metavar="VALUE",
                help=argparse.SUPPRESS,
            )
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, str]:
    return {key: value for key, value in vars(args).items() if "." in key}


def _run(command: str, config) -> int:
    if command == TRAIN_TEACHER_COMMAND:
        cmd_train_teacher(config)
    elif command == DISTILL_COMMAND:
        cmd_distill(config)
    elif command == ANALYZE_COMMAND:
        cmd_analyze(config)
    elif command == SELFCHECK_COMMAND:
        results = cmd_selfcheck(config)
        if not all(result.passed for result in results):
            return NumericError.exit_code
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    logger = get_logger(name="fusionkd_cli")
    try:
        args = _build_parser().parse_args(argv)
        config = load_run_config(args.config, _overrides(args))
        print(render_config(config), end="", flush=True)
        logger.info("Command started. command=%s config=%s", args.command, args.config)
        status = _run(args.command, config)
        logger.info("Command finished. command=%s status=%s", args.command, status)
        return status
    except FusionKDError as exc:
        logger.error("Command failed. error=%s exit_code=%s", exc, exc.exit_code)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("Config validation failed. error=%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    except FileNotFoundError as exc:
        logger.error("Input file missing. error=%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except Exception as exc:  # noqa: BLE001
        logger.exception("Unhandled error")
        print(f"error: {exc}", file=sys.stderr)
        return NumericError.exit_code


if __name__ == "__main__":
    sys.exit(main())
