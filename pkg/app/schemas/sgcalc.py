from collections.abc import Callable
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from pydantic import BaseModel, Field

from app.core.exceptions import InvalidParams, Unsupported
from app.schemas.multiplier import GridSpec

SymbolFn = Callable[[np.ndarray, np.ndarray], np.ndarray]
DerivFn = Callable[[int, int, np.ndarray, np.ndarray], np.ndarray]

_FD_EPS = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(eq=False)
class SymbolField:
    """a(x, xi) with a derivative oracle deriv(theta, sigma, x, xi) = d_x^theta d_xi^sigma a."""

    name: str
    eval: SymbolFn
    deriv: DerivFn
    m: float
    mu: float
    m_hypo: float = 0.0
    mu_hypo: float = 0.0
    R: float = 0.0
    max_order: int = 64
    x_independent: bool = False

    def __post_init__(self):
        if self.m <= 0 or self.mu <= 0:
            raise InvalidParams(f"symbol orders must be positive, got m={self.m}, mu={self.mu}")
        if not (0 <= self.m_hypo <= self.m and 0 <= self.mu_hypo <= self.mu):
            raise InvalidParams(
                f"hypoelliptic orders ({self.m_hypo}, {self.mu_hypo}) must lie in [0, {self.m}] x [0, {self.mu}]"
            )
        if self.R < 0:
            raise InvalidParams(f"exterior radius must be non-negative, got {self.R}")

    @classmethod
    def from_callable(
        cls,
        name: str,
        fn: SymbolFn,
        m: float,
        mu: float,
        *,
        m_hypo: float = 0.0,
        mu_hypo: float = 0.0,
        R: float = 0.0,
    ) -> "SymbolField":
        """Derivatives by nested central differences, h = eps^(1/3) (1 + |x|); usable for J <= 2."""

        def deriv(theta: int, sigma: int, x, xi):
            if theta:
                h = _FD_EPS * (1.0 + np.abs(x))
                return (deriv(theta - 1, sigma, x + h, xi) - deriv(theta - 1, sigma, x - h, xi)) / (2.0 * h)
            if sigma:
                h = _FD_EPS * (1.0 + np.abs(xi))
                return (deriv(0, sigma - 1, x, xi + h) - deriv(0, sigma - 1, x, xi - h)) / (2.0 * h)
            return fn(x, xi)

        return cls(
            name=name, eval=fn, deriv=deriv, m=m, mu=mu, m_hypo=m_hypo, mu_hypo=mu_hypo, R=R, max_order=6
        )


@dataclass(eq=False)
class PhaseGrid:
    """Spatial nodes x_m and frequencies xi_k (FFT order) of a 1D GridSpec, meshed as [m, k]."""

    grid: GridSpec
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.grid.dim != 1:
            raise Unsupported("variable-coefficient symbols are implemented on 1D grids only")
        x = self.grid.axis()
        xi = self.grid.frequency_axis()
        self.x, self.xi = np.meshgrid(x, xi, indexing="ij")

    @property
    def n(self) -> int:
        return self.grid.n

    @property
    def shape(self) -> tuple[int, int]:
        return (self.grid.n, self.grid.n)

    def derivative(self, a: SymbolField, theta: int = 0, sigma: int = 0) -> np.ndarray:
        key = (a, theta, sigma)
        if key not in self._cache:
            values = a.eval(self.x, self.xi) if theta == sigma == 0 else a.deriv(theta, sigma, self.x, self.xi)
            values = np.broadcast_to(np.asarray(values, dtype=float), self.shape)
            values.setflags(write=False)
            self._cache[key] = values
        return self._cache[key]

    def values(self, a: SymbolField) -> np.ndarray:
        return self.derivative(a, 0, 0)

    def japanese(self) -> tuple[np.ndarray, np.ndarray]:
        """<x> and <xi> on the mesh."""
        return np.sqrt(1.0 + self.x**2), np.sqrt(1.0 + self.xi**2)


class HypoReport(BaseModel):
    h1_ratio_max: float
    h2_lower_margin: float
    h3_ratio_max: float
    failing_points: list[tuple[str, float, float]] = Field(default_factory=list)
    failing_count: int = 0
    h1_ratios: dict[str, float] = Field(default_factory=dict)
    h3_ratios: dict[str, float] = Field(default_factory=dict)

    @property
    def clean(self) -> bool:
        return not self.failing_points


class KernelKind(str, Enum):
    K0 = "K0"
    K1 = "K1"


@dataclass
class KernelTerm:
    j: int
    A: np.ndarray = field(repr=False)


@dataclass
class KernelExpansion:
    """K0 = sum_j t^(jr)/j! A_j E^(j)_{r,1}(-t^r a), K1 the same with E_{r,r} and t^(jr+r-1)."""

    r: float
    J: int
    terms: list[KernelTerm]

    def __post_init__(self):
        if [term.j for term in self.terms] != list(range(len(self.terms))) or len(self.terms) < self.J + 1:
            raise InvalidParams(
                f"expansion of order J={self.J} needs consecutive terms j = 0, 1, ... covering at least j = {self.J}"
            )

    @staticmethod
    def ml_beta(kind: KernelKind, r: float) -> float:
        return 1.0 if kind is KernelKind.K0 else r

    def time_exponent(self, j: int, kind: KernelKind) -> float:
        return j * self.r if kind is KernelKind.K0 else j * self.r + self.r - 1.0

    def coefficient(self, j: int) -> np.ndarray:
        return self.terms[j].A


@dataclass
class ParametrixResult:
    expansion: KernelExpansion
    c_s: np.ndarray = field(repr=False)
    s: float
    lam: float
