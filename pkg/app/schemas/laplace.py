from typing import Literal

from pydantic import BaseModel, Field, field_validator, model_validator


class TalbotConfig(BaseModel):
    node_count: int = Field(default=48, ge=16)
    # Contour scale; None means "use the evaluation time".
    time_scale: float | None = Field(default=None, gt=0)
    contour: Literal["optimized", "classical"] = "optimized"

    @field_validator("node_count")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("node_count must be even")
        return value


class TransformSample(BaseModel):
    s_values: list[complex]
    f_hat: list[complex]

    @model_validator(mode="after")
    def _consistent(self) -> "TransformSample":
        if len(self.s_values) != len(self.f_hat):
            raise ValueError("s_values and f_hat lengths differ")
        if any(s.real <= 0 for s in self.s_values):
            raise ValueError("all nodes need Re(s) > 0")
        return self


class LaplaceEstimate(BaseModel):
    value: complex
    abs_error: float = Field(ge=0)


class PairReport(BaseModel):
    alpha: float
    beta: float
    mu: float
    j: int
    t_grid: list[float]
    time_side: list[float]
    s_side: list[float]
    max_rel_error: float
