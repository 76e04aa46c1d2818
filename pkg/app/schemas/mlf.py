import math
from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, field_validator


class Branch(str, Enum):
    SERIES = "Series"
    INTEGRAL = "Integral"


class MLParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0)
    beta: float

    @field_validator("beta")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("beta must be finite")
        return value

    @property
    def integral_ok(self) -> bool:
        return 0.0 < self.alpha < 1.0 and self.beta < 1.0 + self.alpha


class MLPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    params: MLParams
    z: float
    deriv_order: int = Field(default=0, ge=0)

    @field_validator("z")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("z must be finite")
        return value


class MLResult(BaseModel):
    value: float
    est_rel_error: float = Field(ge=0)
    branch: Branch
