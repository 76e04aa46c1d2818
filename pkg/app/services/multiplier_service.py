"""Constant-coefficient solver on the periodic grid.

u(t) = E_{r,1}(-t^r a(D)) u0 + int_0^t tau^(r-1) E_{r,r}(-tau^r a(D)) f(t - tau) d tau,
applied mode by mode after an FFT.
"""

import logging
from collections.abc import Callable

import numpy as np

from app.core.config import settings
from app.core.exceptions import FracLabError, InvalidParams, LengthMismatch
from app.schemas.caputo import FracGrid
from app.schemas.mlf import MLParams
from app.schemas.multiplier import GridSpec, MultiplierSymbol, SourceSamples, StateField
from app.services.caputo_service import l1_final, product_weights, solve_modes
from app.services.mlf_service import ml_eval_array

logger = logging.getLogger(__name__)

LEAKAGE_WARN = 1e-12


def heat_symbol(kappa: float = 1.0) -> MultiplierSymbol:
    """a(xi) = kappa |xi|^2, the toy diffusion model."""
    if kappa < 0:
        raise InvalidParams(f"diffusivity must be non-negative, got {kappa}")
    return MultiplierSymbol(eval=lambda xi: kappa * np.sum(xi**2, axis=0), growth_tag="|xi|^2")


def zero_symbol() -> MultiplierSymbol:
    return MultiplierSymbol(eval=lambda xi: np.zeros(xi.shape[1:]), growth_tag="0")


def _check_order(r: float) -> None:
    if not 0 < r < 1:
        raise InvalidParams(f"fractional order r must lie in (0, 1), got {r}")


def symbol_values(a: MultiplierSymbol, grid: GridSpec) -> np.ndarray:
    values = a.on(grid)
    if values.shape != grid.shape:
        raise InvalidParams(f"symbol returned shape {values.shape}, expected {grid.shape}")
    bad = ~np.isfinite(values) | (values < 0)
    if bad.any():
        idx = np.argwhere(bad)[0]
        xi = grid.frequencies()[(slice(None), *idx)]
        raise InvalidParams(f"symbol {a.growth_tag!r} is negative or non-finite at xi={xi.tolist()}")
    return values


def apply_multiplier(u: StateField, values: np.ndarray) -> StateField:
    return StateField(grid=u.grid, values=np.fft.ifftn(values * np.fft.fftn(u.values)), time=u.time)


def spectral_derivative(u: StateField, axis: int = 0, order: int = 1) -> StateField:
    """(d/dx_axis)^order u by Fourier multiplication."""
    xi = u.grid.frequencies()[axis]
    return apply_multiplier(u, (1j * xi) ** order)


def _ml_multiplier(beta: float, r: float, z: np.ndarray, grid: GridSpec, threads: int | None) -> np.ndarray:
    try:
        return ml_eval_array(MLParams(alpha=r, beta=beta), z, threads=threads)
    except FracLabError as exc:
        raise type(exc)(
            f"{exc} (E_{{{r},{beta}}} on a {grid.shape} grid, arguments in [{z.min():.3e}, {z.max():.3e}])"
        ) from exc


def _warn_leakage(u: StateField, label: str) -> None:
    leakage = u.imaginary_leakage()
    if leakage > LEAKAGE_WARN:
        logger.warning(f"[MULTIPLIER] {label}: imaginary leakage {leakage:.2e} of field norm")


def evolve_hom(
    u0: StateField, a: MultiplierSymbol, r: float, t: float, *, threads: int | None = None
) -> StateField:
    _check_order(r)
    if t < 0:
        raise InvalidParams(f"time must be non-negative, got {t}")
    if t == 0:
        return StateField(grid=u0.grid, values=u0.values.copy(), time=0.0)
    a_vals = symbol_values(a, u0.grid)
    multiplier = _ml_multiplier(1.0, r, -(t**r) * a_vals, u0.grid, threads)
    u = apply_multiplier(u0, multiplier)
    u.time = t
    if not np.any(u0.values.imag):
        _warn_leakage(u, "evolve_hom")
    logger.debug(f"[MULTIPLIER] evolve_hom r={r} t={t} on {u0.grid.shape}")
    return u


def _source_samples(f, grid: GridSpec | None, t: float, quad_steps: int | None) -> SourceSamples:
    if isinstance(f, SourceSamples):
        if quad_steps is not None and f.steps != quad_steps:
            raise LengthMismatch(f"source has {f.steps} steps, quad_steps={quad_steps}")
        if not np.isclose(f.t, t):
            raise InvalidParams(f"source sampled up to t={f.t}, requested t={t}")
        return f
    if grid is None:
        raise InvalidParams("a callable source needs the grid")
    steps = settings.DUHAMEL_QUAD_STEPS if quad_steps is None else quad_steps
    return SourceSamples.from_callable(grid, f, t, steps)


def duhamel_term(
    f: SourceSamples | Callable[[float], np.ndarray],
    a: MultiplierSymbol,
    r: float,
    t: float,
    quad_steps: int | None = None,
    *,
    grid: GridSpec | None = None,
    threads: int | None = None,
) -> StateField:
    """int_0^t tau^(r-1) E_{r,r}(-tau^r a) f_hat(t - tau) d tau per mode.

    Product integration: tau^(r-1) is integrated exactly against the linear
    interpolant of the remaining factor on each of the ``quad_steps`` panels.
    """
    _check_order(r)
    if t < 0:
        raise InvalidParams(f"time must be non-negative, got {t}")
    if isinstance(f, SourceSamples):
        grid = f.grid
    if t == 0:
        if grid is None:
            raise InvalidParams("a callable source needs the grid")
        return StateField(grid=grid, values=np.zeros(grid.shape), time=0.0)

    samples = _source_samples(f, grid, t, quad_steps)
    grid = samples.grid
    K = samples.steps
    if K < 8:
        raise InvalidParams(f"quad_steps must be at least 8, got {K}")

    a_vals = symbol_values(a, grid)
    h = t / K
    weights = h**r * product_weights(r, K)
    f_hat = np.fft.fftn(samples.values, axes=tuple(range(1, grid.dim + 1)))

    acc = np.zeros(grid.shape, dtype=complex)
    for k in range(K + 1):
        kernel = _ml_multiplier(r, r, -((k * h) ** r) * a_vals, grid, threads)
        acc += weights[k] * kernel * f_hat[K - k]
    u = StateField(grid=grid, values=np.fft.ifftn(acc), time=t)
    logger.debug(f"[MULTIPLIER] duhamel r={r} t={t} steps={K}")
    return u


def evolve_full(
    u0: StateField,
    f: SourceSamples | Callable[[float], np.ndarray] | None,
    a: MultiplierSymbol,
    r: float,
    t: float,
    quad_steps: int | None = None,
    *,
    threads: int | None = None,
) -> StateField:
    u = evolve_hom(u0, a, r, t, threads=threads)
    if f is None:
        return u
    forced = duhamel_term(f, a, r, t, quad_steps, grid=u0.grid, threads=threads)
    return StateField(grid=u0.grid, values=u.values + forced.values, time=t)


def evolve_hom_l1(
    u0: StateField, a: MultiplierSymbol, r: float, t: float, steps: int, *, threads: int | None = None
) -> StateField:
    """Mode-wise L1 reference for ``evolve_hom``."""
    _check_order(r)
    a_vals = symbol_values(a, u0.grid)
    grid = FracGrid(r=r, t_max=t, steps=steps)
    modes = solve_modes(a_vals.ravel(), np.fft.fftn(u0.values).ravel(), grid, threads=threads)
    values = np.fft.ifftn(modes[-1].reshape(u0.grid.shape))
    return StateField(grid=u0.grid, values=values, time=t)


def caputo_residual(
    u_snapshots,
    f,
    a: MultiplierSymbol,
    r: float,
    t_max: float,
    grid: GridSpec,
) -> float:
    """Relative residual of D^r u + a(D) u - f at the final snapshot.

    ``u_snapshots`` and ``f`` hold M+1 uniform time samples on [0, t_max]; ``f``
    may be None for the homogeneous problem. The scale is the sum of the term norms.
    """
    u = np.asarray(u_snapshots)
    if u.shape[1:] != grid.shape:
        raise LengthMismatch(f"snapshot shape {u.shape[1:]} != grid shape {grid.shape}")
    time_grid = FracGrid(r=r, t_max=t_max, steps=u.shape[0] - 1)
    caputo = l1_final(time_grid, u)
    spatial = np.fft.ifftn(symbol_values(a, grid) * np.fft.fftn(u[-1]))
    forcing = np.zeros(grid.shape) if f is None else np.asarray(f)[-1]
    if f is not None and np.asarray(f).shape != u.shape:
        raise LengthMismatch(f"source shape {np.asarray(f).shape} != snapshot shape {u.shape}")

    residual = np.linalg.norm(caputo + spatial - forcing)
    scale = np.linalg.norm(caputo) + np.linalg.norm(spatial) + np.linalg.norm(forcing)
    value = float(residual / scale) if scale > 0 else 0.0
    logger.debug(f"[MULTIPLIER] caputo residual {value:.3e} over {u.shape[0] - 1} steps")
    return value


def snapshot_norms(u0: StateField, f, a: MultiplierSymbol, r: float, times, quad_steps: int | None = None):
    """(t, ||u(t)||_2) for each requested time."""
    rows = []
    for t in times:
        u = evolve_full(u0, f, a, r, float(t), quad_steps)
        rows.append((float(t), u.l2_norm()))
    return rows
