from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator


class GridSpec(BaseModel):
    """Torus [-L, L)^dim with n points per axis."""

    model_config = ConfigDict(frozen=True)

    dim: int = Field(default=1, ge=1, le=2)
    n: int = Field(ge=2)
    L: float = Field(gt=0)

    @field_validator("n")
    @classmethod
    def _power_of_two(cls, value: int) -> int:
        if value & (value - 1):
            raise ValueError("n must be a power of two")
        return value

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / self.n

    def axis(self) -> np.ndarray:
        return -self.L + self.spacing * np.arange(self.n)

    def frequency_axis(self) -> np.ndarray:
        """xi_k = pi*k/L in FFT storage order."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n, d=self.spacing)

    def nodes(self) -> tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis()] * self.dim), indexing="ij"))

    def frequencies(self) -> np.ndarray:
        """Array of shape (dim, *shape) holding the frequency components."""
        return np.stack(np.meshgrid(*([self.frequency_axis()] * self.dim), indexing="ij"))


@dataclass(frozen=True)
class MultiplierSymbol:
    eval: Callable[[np.ndarray], np.ndarray]
    growth_tag: str = ""

    def on(self, grid: GridSpec) -> np.ndarray:
        return np.asarray(self.eval(grid.frequencies()), dtype=float)


@dataclass
class StateField:
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != self.grid.shape:
            raise ValueError(f"values shape {self.values.shape} != grid shape {self.grid.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("StateField values must be finite")

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.values) ** 2) * self.grid.spacing**self.grid.dim))

    def imaginary_leakage(self) -> float:
        scale = np.linalg.norm(self.values)
        return float(np.max(np.abs(self.values.imag)) / scale) if scale > 0 else 0.0


@dataclass
class SourceSamples:
    """f(t_k, x) on the uniform nodes t_k = k*t/steps, k = 0..steps."""

    grid: GridSpec
    t: float
    values: np.ndarray = field(repr=False)

    @property
    def steps(self) -> int:
        return self.values.shape[0] - 1

    @classmethod
    def from_callable(cls, grid: GridSpec, fn: Callable[[float], np.ndarray], t: float, steps: int):
        times = np.linspace(0.0, t, steps + 1)
        values = np.stack([np.broadcast_to(np.asarray(fn(tk), dtype=complex), grid.shape) for tk in times])
        return cls(grid=grid, t=t, values=values)
