from enum import Enum
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import settings


class Command(str, Enum):
    MLF_EVAL = "mlf-eval"
    VERIFY_LAPLACE = "verify-laplace"
    SOLVE_CONST = "solve-const"
    SOLVE_VAR = "solve-var"
    VERIFY_DECAY = "verify-decay"
    PARAMETRIX_REPORT = "parametrix-report"


SymbolName = Literal["poly_sg", "multiplier_xi2", "custom"]


def _open_unit(value: float, name: str) -> float:
    if not 0.0 < value < 1.0:
        raise ValueError(f"{name} must lie in the open interval (0, 1), got {value}")
    return value


class ExperimentParams(BaseModel):
    """Every key the config format accepts; commands pick what they need."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    # Mittag-Leffler
    alpha: float | None = Field(default=None, gt=0)
    beta: float | None = None
    j: int = Field(default=0, ge=0, le=settings.ML_MAX_DERIV)
    mu: float = Field(default=-1.0, le=0)
    z: list[float] | None = None
    z_min: float | None = None
    z_max: float | None = None
    z_count: int = Field(default=50, ge=2)

    # time stepping and grids
    r: float | None = None
    r_list: list[float] = Field(default_factory=lambda: [0.3, 0.5, 0.8])
    n: int | None = Field(default=None, ge=8)
    L: float | None = Field(default=None, gt=0)
    dim: int = Field(default=1, ge=1, le=2)
    t: list[float] | None = None
    steps: int = Field(default=2048, ge=2, le=settings.L1_MAX_STEPS)
    quad_steps: int = Field(default=settings.DUHAMEL_QUAD_STEPS, ge=8)
    source: Literal["none", "gaussian"] = "none"
    width: float = Field(default=1.0, gt=0)
    center: float = 0.0
    wavenumber: float = Field(default=0.0, ge=0)

    # symbols and parametrix
    symbol: SymbolName | None = None
    kappa: float = Field(default=1.0, ge=0)
    coef_x: list[float] | None = None
    coef_xi: list[float] | None = None
    J: int | None = None
    s: list[float] | None = None

    # Laplace inversion
    node_count: int = Field(default=settings.TALBOT_NODES, ge=16)
    contour: Literal["optimized", "classical"] = "optimized"

    # per-check threshold overrides
    tol: float | None = Field(default=None, gt=0)
    rel_tol: float | None = Field(default=None, gt=0)

    @field_validator("r")
    @classmethod
    def _r_range(cls, value: float | None) -> float | None:
        return None if value is None else _open_unit(value, "r")

    @field_validator("r_list")
    @classmethod
    def _r_list_range(cls, value: list[float]) -> list[float]:
        return [_open_unit(item, "every entry of r_list") for item in value]

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int | None) -> int | None:
        if value is not None and value & (value - 1):
            raise ValueError(f"n must be a power of two, got {value}")
        return value

    @field_validator("J")
    @classmethod
    def _truncation(cls, value: int | None) -> int | None:
        if value is not None and not 0 <= value <= 3:
            raise ValueError(f"J must satisfy 0 <= J <= 3, got {value}")
        return value

    @field_validator("t")
    @classmethod
    def _times(cls, value: list[float] | None) -> list[float] | None:
        if value is not None and any(item < 0 for item in value):
            raise ValueError("times must be non-negative")
        return value

    @field_validator("s")
    @classmethod
    def _laplace_args(cls, value: list[float] | None) -> list[float] | None:
        if value is not None and any(item <= 0 for item in value):
            raise ValueError("s values must be positive")
        return value

    @field_validator("node_count")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError(f"node_count must be even, got {value}")
        return value


LIST_KEYS = frozenset({"z", "t", "r_list", "coef_x", "coef_xi", "s"})
CONFIG_KEYS = frozenset(ExperimentParams.model_fields) | {"command"}

REQUIRED_KEYS: dict[Command, tuple[str, ...]] = {
    Command.MLF_EVAL: ("alpha", "beta"),
    Command.VERIFY_LAPLACE: ("alpha", "beta"),
    Command.SOLVE_CONST: ("r", "n", "L", "t"),
    Command.SOLVE_VAR: ("r", "n", "L", "t"),
    Command.VERIFY_DECAY: ("alpha", "beta"),
    Command.PARAMETRIX_REPORT: ("r", "n", "L"),
}


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    command: Command
    params: ExperimentParams
    lines: dict[str, int] = Field(default_factory=dict)


class CheckResult(BaseModel):
    name: str
    value: float
    threshold: float
    comparison: Literal["<=", ">=", "=="] = "<="
    passed: bool

    @classmethod
    def at_most(cls, name: str, value: float, threshold: float) -> "CheckResult":
        return cls(name=name, value=value, threshold=threshold, comparison="<=", passed=bool(value <= threshold))

    @classmethod
    def at_least(cls, name: str, value: float, threshold: float) -> "CheckResult":
        return cls(name=name, value=value, threshold=threshold, comparison=">=", passed=bool(value >= threshold))

    @classmethod
    def holds(cls, name: str, flag: bool) -> "CheckResult":
        return cls(name=name, value=float(flag), threshold=1.0, comparison="==", passed=bool(flag))

    def describe(self) -> str:
        verdict = "pass" if self.passed else "FAIL"
        return f"{self.name} {self.comparison} {self.threshold:g}: {verdict} (measured {self.value:.3e})"


class RunReport(BaseModel):
    command: Command
    wall_time: float = 0.0
    checks: list[CheckResult] = Field(default_factory=list)
    outputs: list[str] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)
