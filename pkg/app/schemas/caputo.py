from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field
from scipy.special import gamma

SourceFn = Callable[[np.ndarray], np.ndarray]


class FracGrid(BaseModel):
    """Uniform time grid t_n = n*tau, n = 0..M, carrying the L1 history weights."""

    model_config = ConfigDict(frozen=True)

    r: float = Field(gt=0, lt=1)
    t_max: float = Field(gt=0)
    steps: int = Field(ge=2)

    @computed_field
    @property
    def tau(self) -> float:
        return self.t_max / self.steps

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.tau

    @property
    def weights(self) -> np.ndarray:
        k = np.arange(self.steps, dtype=float)
        return (k + 1.0) ** (1.0 - self.r) - k ** (1.0 - self.r)

    @property
    def scale(self) -> float:
        """tau^{-r} / Gamma(2 - r)."""
        return self.tau ** (-self.r) / gamma(2.0 - self.r)


class FodeProblem(BaseModel):
    """D^r y + lam*y = g(t), y(0) = y0."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    r: float = Field(gt=0, lt=1)
    lam: float = Field(default=0.0, ge=0)
    y0: float = 0.0
    g: SourceFn | None = None
    # None selects the automatic singular-part subtraction order, 0 disables it.
    correction_terms: int | None = Field(default=None, ge=0)
