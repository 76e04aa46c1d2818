"""L1 discretization of the Caputo derivative and implicit fractional ODE solvers.

Only ``fode_closed_form`` (the reference for ``empirical_order``) touches the
Mittag-Leffler code; the stepping itself is the independent oracle for the multiplier and parametrix solvers.
"""

import logging
import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.special import gamma, rgamma

from app.core.config import settings
from app.core.exceptions import InvalidParams, LengthMismatch, Unsupported
from app.schemas.caputo import FodeProblem, FracGrid
from app.schemas.mlf import MLParams
from app.services.mlf_service import ml_eval_array

logger = logging.getLogger(__name__)


def _check_steps(grid: FracGrid) -> None:
    if grid.steps > settings.L1_MAX_STEPS:
        raise InvalidParams(f"steps={grid.steps} exceeds L1_MAX_STEPS={settings.L1_MAX_STEPS}")


def _as_samples(grid: FracGrid, samples) -> np.ndarray:
    y = np.asarray(samples)
    if y.shape[0] != grid.steps + 1:
        raise LengthMismatch(f"expected {grid.steps + 1} samples, got {y.shape[0]}")
    return y if np.iscomplexobj(y) else y.astype(float)


def l1_apply(grid: FracGrid, samples) -> np.ndarray:
    """Discrete Caputo derivative at t_1..t_M from samples y(t_0..t_M).

    Extra trailing axes are treated as independent components.
    """
    y = _as_samples(grid, samples)
    diffs = np.diff(y, axis=0)
    b = grid.weights
    out = np.empty_like(diffs)
    for n in range(1, grid.steps + 1):
        out[n - 1] = np.tensordot(b[:n], diffs[n - 1 :: -1], axes=1)
    return grid.scale * out


def l1_final(grid: FracGrid, samples) -> np.ndarray:
    """Discrete Caputo derivative at t_M only."""
    diffs = np.diff(_as_samples(grid, samples), axis=0)
    return grid.scale * np.tensordot(grid.weights, diffs[::-1], axes=1)


def correction_order(r: float) -> int:
    """Number of series terms removed so that the remainder behaves like t^2 or smoother."""
    return max(1, math.ceil(2.0 / r) - 1)


def _singular_part(lambdas: np.ndarray, y0: np.ndarray, g0: np.ndarray, r: float, K: int, t: np.ndarray):
    """Truncated series y_s and the leftover source lam*c_K t^(Kr)/Gamma(1+Kr).

    c_0 = y0, c_1 = g(0) - lam*y0, c_k = -lam*c_(k-1); then
    D^r y_s + lam*y_s = g(0) + lam*c_K t^(Kr)/Gamma(1+Kr).
    """
    coeff = y0.astype(complex)
    ys = np.broadcast_to(coeff, (t.size, coeff.size)).copy()
    coeff = g0 - lambdas * y0
    for k in range(1, K + 1):
        ys += np.outer(t ** (k * r) * rgamma(1.0 + k * r), coeff)
        if k < K:
            coeff = -lambdas * coeff
    leftover = np.outer(t ** (K * r) * rgamma(1.0 + K * r), lambdas * coeff)
    return ys, leftover


def _series_growth(lambdas: np.ndarray, y0: np.ndarray, g0: np.ndarray, r: float, K: int, t_max: float) -> np.ndarray:
    """Largest |c_k| t_max^(kr)/Gamma(1+kr), k = 1..K+1, relative to the solution scale."""
    x = lambdas * t_max**r
    k = np.arange(1, K + 2)
    first = np.abs(g0 - lambdas * y0) * t_max**r
    terms = first[:, None] * x[:, None] ** (k - 1) * rgamma(1.0 + k * r)
    scale = np.maximum(np.abs(y0), np.abs(g0) * t_max**r * rgamma(1.0 + r))
    worst = terms.max(axis=1)
    return np.divide(worst, scale, out=np.zeros_like(worst), where=scale > 0)


def _march(grid: FracGrid, lambdas: np.ndarray, y0: np.ndarray, source: np.ndarray) -> np.ndarray:
    """Implicit L1 steps for y' modes: (c + lam) y_n = g_n + c y_(n-1) - c * history_n."""
    M, c, b = grid.steps, grid.scale, grid.weights
    y = np.empty((M + 1, lambdas.size), dtype=source.dtype)
    diffs = np.empty((M, lambdas.size), dtype=source.dtype)
    y[0] = y0
    denom = c + lambdas
    for n in range(1, M + 1):
        history = b[1:n] @ diffs[n - 2 :: -1] if n > 1 else 0.0
        y[n] = (source[n] + c * y[n - 1] - c * history) / denom
        diffs[n - 1] = y[n] - y[n - 1]
    return y


def _sample_source(g: Callable | None, t: np.ndarray, modes: int) -> np.ndarray:
    if g is None:
        return np.zeros((t.size, modes))
    values = np.asarray(g(t))
    if values.ndim == 1:
        values = values[:, None]
    return np.broadcast_to(values, (t.size, modes))


def solve_modes(
    lambdas,
    y0,
    grid: FracGrid,
    g: Callable | None = None,
    *,
    correction_terms: int | None = None,
    threads: int | None = None,
) -> np.ndarray:
    """Solve D^r y + lam_i y = g, y(0) = y0_i for every mode i at once.

    ``g`` maps the node array to values of shape (M+1,) or (M+1, modes).
    Returns an array of shape (M+1, modes). The singular part is subtracted only on modes
    whose truncated series stays small enough for the subtraction to pay off
    (``L1_CORRECTION_GAIN_MAX``); the rest are stepped plainly.
    """
    _check_steps(grid)
    lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if np.any(lambdas < 0) or not np.all(np.isfinite(lambdas)):
        raise InvalidParams("mode rates must be finite and non-negative")
    y0 = np.broadcast_to(np.asarray(y0), lambdas.shape)
    t = grid.nodes
    source = _sample_source(g, t, lambdas.size)

    K = correction_order(grid.r) if correction_terms is None else correction_terms
    if K > 0:
        growth = _series_growth(lambdas, np.asarray(y0), source[0], grid.r, K, grid.t_max)
        # remainder error ~ growth * tau^(2-r), plain L1 error ~ tau
        corrected = growth * grid.tau ** (1.0 - grid.r) <= settings.L1_CORRECTION_GAIN_MAX
        g0 = np.where(corrected, source[0], 0.0)
        lam_c = np.where(corrected, lambdas, 0.0)
        ys, leftover = _singular_part(lam_c, np.where(corrected, y0, 0.0), g0, grid.r, K, t)
        source = source - g0 - leftover
        start = np.where(corrected, 0.0, y0)
    else:
        ys = None
        start = y0

    dtype = np.result_type(source, start, float)
    if ys is not None and np.isrealobj(y0) and np.isrealobj(source):
        ys = ys.real
    source = np.asarray(source, dtype=dtype)
    start = np.asarray(start, dtype=dtype)

    workers = threads or settings.THREADS
    if workers > 1 and lambdas.size > 1:
        bounds = np.array_split(np.arange(lambdas.size), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(
                pool.map(lambda idx: _march(grid, lambdas[idx], start[idx], source[:, idx]), bounds)
            )
        w = np.concatenate(parts, axis=1)
    else:
        w = _march(grid, lambdas, start, source)

    logger.debug(f"[L1] {lambdas.size} modes, M={grid.steps}, r={grid.r}, correction terms {K}")
    return w + ys if ys is not None else w


def solve_scalar_fode(p: FodeProblem, grid: FracGrid) -> np.ndarray:
    if not math.isclose(p.r, grid.r):
        raise InvalidParams(f"problem order r={p.r} differs from grid order r={grid.r}")
    return solve_modes([p.lam], p.y0, grid, p.g, correction_terms=p.correction_terms)[:, 0]


def fode_closed_form(p: FodeProblem, t) -> np.ndarray:
    """y0*E_{r,1}(-lam t^r) for g = None; constant sources g0 add g0 t^r E_{r,1+r}(-lam t^r)."""
    t = np.asarray(t, dtype=float)
    z = -p.lam * t**p.r
    value = p.y0 * ml_eval_array(MLParams(alpha=p.r, beta=1.0), z)
    if p.g is not None:
        samples = np.asarray(p.g(np.array([0.0, 0.5, 1.0])), dtype=float)
        if not np.allclose(samples, samples[0]):
            raise Unsupported("closed form only available for constant sources")
        value = value + samples[0] * t**p.r * ml_eval_array(MLParams(alpha=p.r, beta=1.0 + p.r), z)
    return value


def empirical_order(
    p: FodeProblem,
    M_list: list[int],
    *,
    t_max: float = 1.0,
    exact: Callable[[float], float] | None = None,
) -> float:
    """Least-squares slope of log|error at t_max| against log(tau)."""
    steps = list(M_list)
    if len(steps) < 3 or any(b <= a for a, b in zip(steps, steps[1:])):
        raise InvalidParams("M_list needs at least three strictly increasing entries")
    reference = float(exact(t_max)) if exact is not None else float(fode_closed_form(p, [t_max])[0])

    taus, errors = [], []
    for M in steps:
        grid = FracGrid(r=p.r, t_max=t_max, steps=M)
        y = solve_scalar_fode(p, grid)
        taus.append(grid.tau)
        errors.append(abs(y[-1] - reference))
    if min(errors) == 0.0:
        raise InvalidParams("zero error on every grid; the order is undefined")
    slope = float(np.polyfit(np.log(taus), np.log(errors), 1)[0])
    logger.info(f"[L1] empirical order r={p.r}: {slope:.3f} (errors {['%.2e' % e for e in errors]})")
    return slope


def solve_operator_fode(A, u0, grid: FracGrid, source: Callable | None = None) -> np.ndarray:
    """Implicit L1 stepping for D^r u + A u = f with a dense matrix A.

    One LU factorization of (c I + A) serves every step. Returns shape (M+1, n).
    """
    _check_steps(grid)
    A = np.asarray(A)
    u0 = np.asarray(u0)
    n = u0.size
    if A.shape != (n, n):
        raise LengthMismatch(f"operator shape {A.shape} does not match state size {n}")
    c, b, M = grid.scale, grid.weights, grid.steps
    dtype = np.result_type(A, u0, float)
    factors = lu_factor(c * np.eye(n, dtype=dtype) + A)
    t = grid.nodes

    u = np.empty((M + 1, n), dtype=dtype)
    diffs = np.empty((M, n), dtype=dtype)
    u[0] = u0
    for k in range(1, M + 1):
        rhs = c * u[k - 1]
        if k > 1:
            rhs = rhs - c * (b[1:k] @ diffs[k - 2 :: -1])
        if source is not None:
            rhs = rhs + np.asarray(source(t[k]), dtype=dtype)
        u[k] = lu_solve(factors, rhs)
        diffs[k - 1] = u[k] - u[k - 1]
    logger.debug(f"[L1] operator stepping n={n}, M={M}")
    return u


@lru_cache(maxsize=64)
def product_weights(gamma_: float, steps: int) -> np.ndarray:
    """Node weights w_k with int_0^K s^(gamma-1) phi(s) ds ~ sum_k w_k phi(k), phi piecewise linear.

    Scale by h**gamma for a step h.
    """
    k = np.arange(steps, dtype=float)
    i0 = ((k + 1.0) ** gamma_ - k**gamma_) / gamma_
    i1 = ((k + 1.0) ** (gamma_ + 1.0) - k ** (gamma_ + 1.0)) / (gamma_ + 1.0)
    left = (k + 1.0) * i0 - i1
    right = i1 - k * i0
    weights = np.zeros(steps + 1)
    weights[:-1] += left
    weights[1:] += right
    weights.setflags(write=False)
    return weights


def power_kernel(order: float, t) -> np.ndarray:
    """f_order(t) = t^(order-1)/Gamma(order)."""
    return np.asarray(t, dtype=float) ** (order - 1.0) / gamma(order)


def kernel_convolution(alpha: float, beta: float, grid: FracGrid, *, substeps: int = 256) -> np.ndarray:
    """(f_alpha * f_beta)(t_n) for n = 1..M by split product integration.

    The integral is split at t/2: the singular factor of each half carries the
    exact power weight, the other factor is linearly interpolated.
    """
    if alpha <= 0 or beta <= 0:
        raise InvalidParams(f"kernel orders must be positive, got {alpha}, {beta}")
    t = grid.nodes[1:, None]
    h = t / (2.0 * substeps)
    s = h * np.arange(substeps + 1)
    w_alpha = product_weights(alpha, substeps)
    w_beta = product_weights(beta, substeps)
    near_zero = h**alpha * (w_alpha * power_kernel(beta, t - s)).sum(axis=1, keepdims=True) / gamma(alpha)
    near_t = h**beta * (w_beta * power_kernel(alpha, t - s)).sum(axis=1, keepdims=True) / gamma(beta)
    return (near_zero + near_t)[:, 0]
