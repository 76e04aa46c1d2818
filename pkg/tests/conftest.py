import mpmath as mp
import numpy as np
import pytest

from app.schemas.multiplier import GridSpec, StateField
from app.services.sgcalc_service import phase_grid, poly_sg
from app.utils.helpers import gaussian


def mp_ml(alpha: float, beta: float, z: float, j: int = 0, dps: int = 80) -> float:
    """E^(j)_{alpha,beta}(z) from the defining series in extended precision."""
    with mp.workdps(dps):
        a, b, x = mp.mpf(alpha), mp.mpf(beta), mp.mpf(z)
        total = mp.mpf(0)
        k = j
        while True:
            term = mp.ff(k, j) * x ** (k - j) * mp.rgamma(a * k + b)
            total += term
            if k > j + 20 and abs(term) < mp.mpf(10) ** (-dps + 5) * max(abs(total), 1):
                break
            k += 1
        return float(total)


@pytest.fixture
def grid_1d() -> GridSpec:
    return GridSpec(dim=1, n=64, L=10.0)


@pytest.fixture
def bump(grid_1d) -> StateField:
    return StateField(grid=grid_1d, values=gaussian(grid_1d))


@pytest.fixture
def sg_grid():
    return phase_grid(32, 10.0)


@pytest.fixture
def poly_symbol():
    return poly_sg()
