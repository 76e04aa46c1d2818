"""Experiment configs: parsing, validation and dispatch to the command pipelines."""

import logging
import time
from collections.abc import Callable
from pathlib import Path

from pydantic import ValidationError as PydanticValidationError

from app.commands import mlf_eval, parametrix_report, solve_const, solve_var, verify_decay, verify_laplace
from app.core.config import settings
from app.core.exceptions import ParseError, UnknownKey, ValidationError
from app.schemas.experiment import (
    CONFIG_KEYS,
    LIST_KEYS,
    REQUIRED_KEYS,
    Command,
    ExperimentConfig,
    ExperimentParams,
    RunReport,
)

logger = logging.getLogger(__name__)

# pipelines take (params, out_dir, report, *, threads)
Pipeline = Callable[..., None]

PIPELINES: dict[Command, Pipeline] = {
    Command.MLF_EVAL: mlf_eval.execute,
    Command.VERIFY_LAPLACE: verify_laplace.execute,
    Command.SOLVE_CONST: solve_const.execute,
    Command.SOLVE_VAR: solve_var.execute,
    Command.VERIFY_DECAY: verify_decay.execute,
    Command.PARAMETRIX_REPORT: parametrix_report.execute,
}


def _tokenize(text: str) -> tuple[dict[str, str], dict[str, int]]:
    raw: dict[str, str] = {}
    lines: dict[str, int] = {}
    malformed: list[str] = []
    unknown: list[str] = []
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key, value = key.strip(), value.strip()
        if not sep or not key:
            malformed.append(f"line {number}: expected 'key = value', got {content!r}")
        elif key in raw:
            malformed.append(f"line {number}: duplicate key {key!r} (first set on line {lines[key]})")
        elif key not in CONFIG_KEYS:
            unknown.append(f"line {number}: unknown key {key!r}")
        else:
            raw[key] = value
            lines[key] = number
    if malformed:
        raise ParseError(malformed)
    if unknown:
        raise UnknownKey(unknown)
    return raw, lines


def _typed(raw: dict[str, str]) -> dict[str, object]:
    values: dict[str, object] = {}
    for key, value in raw.items():
        if key == "command":
            continue
        if key in LIST_KEYS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def _where(key: str, raw: dict[str, str], lines: dict[str, int]) -> str:
    return f"line {lines[key]}: {key} = {raw[key]}" if key in lines else key


def _required(command: Command, params: ExperimentParams, raw: dict[str, str], lines) -> list[str]:
    errors = [f"{command.value} needs '{key}'" for key in REQUIRED_KEYS[command] if getattr(params, key) is None]
    if command is Command.MLF_EVAL and params.z is None and (params.z_min is None or params.z_max is None):
        errors.append("mlf-eval needs either 'z' or both 'z_min' and 'z_max'")
    if command is Command.SOLVE_CONST and params.symbol == "poly_sg":
        errors.append(f"{_where('symbol', raw, lines)}: solve-const needs an x-independent symbol")
    if command in (Command.SOLVE_VAR, Command.PARAMETRIX_REPORT) and params.dim != 1:
        errors.append(f"{_where('dim', raw, lines)}: {command.value} runs on 1D grids only")
    if params.symbol == "custom" and (params.coef_x is None or params.coef_xi is None):
        errors.append("symbol 'custom' needs both 'coef_x' and 'coef_xi'")
    return errors


def parse_config(text: str, command: Command | str | None = None) -> ExperimentConfig:
    """Parse the "key = value" format; every problem found is reported with its line number."""
    raw, lines = _tokenize(text)
    errors: list[str] = []

    chosen = None
    if "command" in raw:
        try:
            chosen = Command(raw["command"])
        except ValueError:
            options = ", ".join(c.value for c in Command)
            errors.append(f"{_where('command', raw, lines)}: unknown command (choose from {options})")
    if command is not None:
        command = Command(command)
        if chosen is not None and chosen is not command:
            errors.append(f"{_where('command', raw, lines)}: config is for {chosen.value}, not {command.value}")
        chosen = command
    elif chosen is None and "command" not in raw:
        errors.append("no command given")

    params = None
    try:
        params = ExperimentParams(**_typed(raw))
    except PydanticValidationError as exc:
        for err in exc.errors():
            key = str(err["loc"][0]) if err["loc"] else "?"
            errors.append(f"{_where(key, raw, lines)}: {err['msg']}")

    if params is not None and chosen is not None:
        errors += _required(chosen, params, raw, lines)
    if errors:
        raise ValidationError(errors)
    logger.debug(f"[CLI] parsed {chosen.value} config with keys {sorted(raw)}")
    return ExperimentConfig(command=chosen, params=params, lines=lines)


def load_config(path: Path, command: Command | str | None = None) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), command)


def run(cfg: ExperimentConfig, out_dir: Path | None = None, threads: int | None = None) -> RunReport:
    out_dir = Path(out_dir or settings.OUTPUT_DIR)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = RunReport(command=cfg.command)
    started = time.perf_counter()
    logger.info(f"[CLI] {cfg.command.value} -> {out_dir}")
    PIPELINES[cfg.command](cfg.params, out_dir, report, threads=threads)
    report.wall_time = time.perf_counter() - started

    for check in report.checks:
        log = logger.info if check.passed else logger.warning
        log(f"[CLI] {check.describe()}")
    summary = out_dir / "report.json"
    summary.write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"[CLI] {cfg.command.value} {'passed' if report.passed else 'FAILED'} in {report.wall_time:.2f}s")
    return report
