"""Mittag-Leffler functions E_{alpha,beta}(z) and their z-derivatives on the real line.

Two evaluation paths are provided:

* the power series sum_k k!/(k-j)! z^(k-j) / Gamma(alpha*k + beta), summed in
  double precision with exact (Shewchuk) compensation and escalated to mpmath
  extended precision when term cancellation would eat the result;
* for z < 0 and 0 < alpha < 1 the Laplace-integral representation

      E_{alpha,beta}(z) = y^c / pi * int_0^inf exp(-omega * y^(1/alpha)) psi(omega) d omega,
      y = -z, c = (1 - beta)/alpha,

  differentiated in z under the integral sign.

``ml_eval_array`` is the vectorized variant used on Fourier and phase-space grids.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import mpmath
import numpy as np
from scipy.special import gammaincc, gammaln, gammasgn, rgamma
from scipy.special import gamma as gamma_fn

from app.core.config import settings
from app.core.exceptions import InvalidParams, NonConvergence, QuadratureFailure, Unsupported
from app.schemas.mlf import Branch, MLParams, MLPoint, MLResult
from app.services.quadrature_service import adaptive_gauss_legendre, graded_laplace_rule

logger = logging.getLogger(__name__)

_EPS = np.finfo(float).eps
_CHUNK = 256
_SERIES_ACCEPT = 1e-13
_SAFE_CANCELLATION = 1e3
# exp() of larger log terms overflows in double precision
_DOUBLE_PEAK_MAX = 600.0
_ARRAY_CHUNK = 2048


def _sin_pi(x: float) -> float:
    if float(x).is_integer():
        return 0.0
    return math.sin(math.pi * x)


def _require_integral_params(p: MLParams) -> None:
    if not p.integral_ok:
        raise InvalidParams(
            f"integral representation needs alpha in (0,1) and beta < 1+alpha, got alpha={p.alpha}, beta={p.beta}"
        )


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


def _log_coefficients(alpha: float, beta: float, k: np.ndarray, j: int) -> tuple[np.ndarray, np.ndarray]:
    """log|k!/(k-j)!/Gamma(alpha*k+beta)| and its sign; sign 0 at poles of Gamma."""
    arg = alpha * k + beta
    pole = (arg <= 0) & (arg == np.round(arg))
    with np.errstate(divide="ignore", invalid="ignore"):
        log_mag = gammaln(k + 1.0) - gammaln(k - j + 1.0) - gammaln(arg)
        sign = gammasgn(arg)
    log_mag = np.where(pole, -np.inf, log_mag)
    sign = np.where(pole, 0.0, sign)
    return log_mag, sign


def _peak_log_term(alpha: float, beta: float, z: float, j: int) -> float:
    """Natural log of the largest |term| of the series at z."""
    log_z = math.log(abs(z))
    peak = -math.inf
    start = j
    while start - j <= settings.ML_SERIES_MAX_TERMS:
        k = np.arange(start, start + _CHUNK, dtype=float)
        log_coef, _ = _log_coefficients(alpha, beta, k, j)
        log_term = log_coef + (k - j) * log_z
        finite = np.isfinite(log_term)
        if finite.any():
            peak = max(peak, float(np.max(log_term[finite])))
        last, before = log_term[-1], log_term[-2]
        if not (np.isfinite(last) and last >= before):
            return peak
        start += _CHUNK
    raise NonConvergence(f"series terms for E^({j})_{{{alpha},{beta}}}({z}) still grow after the term cap")


def _series_double(alpha: float, beta: float, z: float, j: int) -> tuple[float, float, float, float]:
    """Returns (sum, tail bound, sum of |terms|, largest |log term|)."""
    log_z = math.log(abs(z))
    z_sign = -1.0 if z < 0 else 1.0
    terms: list[float] = []
    abs_sum = 0.0
    log_span = 0.0
    start = j
    while True:
        if start - j > settings.ML_SERIES_MAX_TERMS:
            raise NonConvergence(
                f"series for E^({j})_{{{alpha},{beta}}}({z}) did not converge in "
                f"{settings.ML_SERIES_MAX_TERMS} terms"
            )
        k = np.arange(start, start + _CHUNK, dtype=float)
        log_coef, sign = _log_coefficients(alpha, beta, k, j)
        log_term = log_coef + (k - j) * log_z
        powers = np.where((k - j) % 2 == 0, 1.0, z_sign)
        chunk = sign * powers * np.exp(log_term)
        terms.extend(chunk.tolist())
        abs_sum += float(np.sum(np.abs(chunk)))
        finite = np.isfinite(log_term)
        if finite.any():
            log_span = max(log_span, float(np.max(np.abs(log_term[finite]))))

        partial = math.fsum(terms)
        last, before = log_term[-1], log_term[-2]
        # log|term| is concave in k, so a decrease at the chunk end means the peak is behind us.
        if np.isfinite(last) and last < before:
            ratio = math.exp(last - before)
            tail = math.exp(last) * ratio / (1.0 - ratio)
            if tail <= settings.ML_SERIES_TAIL_TOL * max(abs(partial), _EPS * abs_sum):
                return partial, tail, abs_sum, log_span
        elif not np.isfinite(last) and not np.isfinite(before):
            return partial, 0.0, abs_sum, log_span
        start += _CHUNK


def _series_extended(alpha: float, beta: float, z: float, j: int, dps: int) -> tuple[float, float]:
    with mpmath.workdps(dps):
        a, b, x = mpmath.mpf(alpha), mpmath.mpf(beta), mpmath.mpf(z)
        total = mpmath.mpf(0)
        abs_total = mpmath.mpf(0)
        prev = None
        k = j
        while True:
            if k - j > settings.ML_SERIES_MAX_TERMS:
                raise NonConvergence(f"extended series did not converge for z={z}")
            term = mpmath.ff(k, j) * x ** (k - j) * mpmath.rgamma(a * k + b)
            total += term
            abs_total += abs(term)
            if prev is not None and term != 0 and abs(term) < abs(prev):
                ratio = abs(term / prev)
                if ratio < 1:
                    tail = abs(term) * ratio / (1 - ratio)
                    floor = max(abs(total), abs_total * mpmath.mpf(10) ** (-dps))
                    if tail <= settings.ML_SERIES_TAIL_TOL * floor * mpmath.mpf("1e-2"):
                        break
            prev = term if term != 0 else prev
            k += 1
        value = float(total)
        if total == 0:
            return value, float(tail)
        rel = tail / abs(total) + mpmath.mpf(10) ** (-dps) * abs_total / abs(total)
        return value, float(rel)


def ml_series(p: MLParams, z: float, j: int = 0, *, radius: float | None = None) -> MLResult:
    radius = settings.ML_SERIES_RADIUS if radius is None else radius
    if j < 0:
        raise InvalidParams(f"derivative order must be >= 0, got {j}")
    if abs(z) > radius:
        raise InvalidParams(f"|z|={abs(z)} exceeds the series radius {radius}")
    alpha, beta = p.alpha, p.beta

    if z == 0.0:
        value = math.factorial(j) * float(rgamma(alpha * j + beta))
        return MLResult(value=value, est_rel_error=0.0, branch=Branch.SERIES)

    peak = _peak_log_term(alpha, beta, z, j)
    if peak < _DOUBLE_PEAK_MAX:
        total, tail, abs_sum, log_span = _series_double(alpha, beta, z, j)
        magnitude = max(abs(total), np.finfo(float).tiny)
        rel = tail / magnitude + 4.0 * _EPS * (1.0 + log_span) * abs_sum / magnitude
        if rel <= _SERIES_ACCEPT:
            return MLResult(value=total, est_rel_error=rel, branch=Branch.SERIES)

    # Cancellation eats the digits of the largest term; dps grows until the estimate meets the target.
    dps = min(30 + max(0, math.ceil(peak / math.log(10.0))), settings.ML_SERIES_MAX_DPS)
    while True:
        logger.debug(f"[MLF] series peak term ~1e{peak / math.log(10.0):.0f} at z={z}; extended precision dps={dps}")
        value, rel = _series_extended(alpha, beta, z, j, dps)
        if rel <= _SERIES_ACCEPT:
            return MLResult(value=value, est_rel_error=rel, branch=Branch.SERIES)
        grown = dps + 10 + max(0, math.ceil(math.log10(rel / _SERIES_ACCEPT))) if math.isfinite(rel) else 2 * dps
        if grown > settings.ML_SERIES_MAX_DPS:
            break
        dps = grown
    if rel <= settings.ML_INTEGRAL_TOL:
        logger.warning(f"[MLF] series at z={z} settled at rel error {rel:.1e} with dps={dps}")
        return MLResult(value=value, est_rel_error=rel, branch=Branch.SERIES)
    raise NonConvergence(
        f"series for E^({j})_{{{alpha},{beta}}}({z}) reached rel error {rel:.1e} at the "
        f"{settings.ML_SERIES_MAX_DPS}-digit cap"
    )


# ---------------------------------------------------------------------------
# integral representation
# ---------------------------------------------------------------------------


def psi_kernel(p: MLParams, omega):
    """Spectral density psi_{alpha,beta}(omega) of the Laplace representation."""
    _require_integral_params(p)
    omega_arr = np.asarray(omega, dtype=float)
    if np.any(omega_arr < 0):
        raise InvalidParams("psi_kernel needs omega >= 0")
    alpha, beta = p.alpha, p.beta
    s1, s2 = _sin_pi(beta), _sin_pi(beta - alpha)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        w_a = omega_arr**alpha
        num = np.zeros_like(omega_arr)
        if s1:
            num = num + s1 * omega_arr ** (2 * alpha - beta)
        if s2:
            num = num + s2 * omega_arr ** (alpha - beta)
        den = w_a * w_a + 2.0 * w_a * math.cos(math.pi * alpha) + 1.0
        out = num / den
    return float(out) if np.ndim(omega) == 0 else out


@lru_cache(maxsize=128)
def _leibniz_coefficients(c: float, pw: float, j: int) -> tuple[float, ...]:
    """C_{j,m} with d^j/dy^j [y^c exp(-omega y^pw)] = sum_m C_{j,m} omega^m y^(c + m pw - j) exp(-omega y^pw)."""
    coeffs = [1.0]
    for step in range(j):
        nxt = [0.0] * (len(coeffs) + 1)
        for m, value in enumerate(coeffs):
            nxt[m] += value * (c + m * pw - step)
            nxt[m + 1] -= pw * value
        coeffs = nxt
    return tuple(coeffs)


def _grading(p: MLParams) -> float:
    gap = p.beta - p.alpha
    return 1.0 / (1.0 - gap) if gap > 0 else 1.0


def _tail_bound(p: MLParams, X: float, upper: float, j: int) -> np.ndarray:
    """Bound on int_upper^inf u^m e^-u |psi(u/X)| du for m = 0..j."""
    alpha, beta = p.alpha, p.beta
    floor = math.sin(math.pi * alpha) ** 2
    m = np.arange(j + 1, dtype=float)
    bound = np.zeros(j + 1)
    for coef, gam in ((abs(_sin_pi(beta)), 2 * alpha - beta), (abs(_sin_pi(beta - alpha)), alpha - beta)):
        if coef:
            shape = m + 1.0 + gam
            bound += coef * X ** (-gam) * gammaincc(shape, upper) * gamma_fn(shape)
    return bound / floor


def _laplace_moments(p: MLParams, X: float, j: int) -> tuple[np.ndarray, np.ndarray]:
    """G_m = int_0^inf u^m e^-u psi(u/X) du, m = 0..j, with absolute error bounds."""
    q = _grading(p)
    powers = np.arange(j + 1)

    def inner(v):
        u = v**q
        base = q * v ** (q - 1.0) * np.exp(-u) * psi_kernel(p, u / X)
        return base[:, None] * u[:, None] ** powers

    def outer(u):
        base = np.exp(-u) * psi_kernel(p, u / X)
        return base[:, None] * u[:, None] ** powers

    tol = 1e-13
    head = adaptive_gauss_legendre(inner, 0.0, 1.0, rel_tol=tol, floor_ratio=1e-3)
    upper = 40.0
    while True:
        body = adaptive_gauss_legendre(outer, 1.0, upper, rel_tol=tol, floor_ratio=1e-3)
        value = head.value + body.value
        tail = _tail_bound(p, X, upper, j)
        if np.all(tail <= 1e-16 * np.abs(value)) or upper >= 400.0:
            break
        upper += 20.0
    return value, head.abs_error + body.abs_error + tail


def ml_integral(p: MLParams, z: float, j: int = 0) -> MLResult:
    _require_integral_params(p)
    if not z < 0:
        raise InvalidParams(f"integral path needs z < 0, got {z}")
    if j < 0:
        raise InvalidParams(f"derivative order must be >= 0, got {j}")
    if j > settings.ML_MAX_DERIV:
        raise Unsupported(f"derivative order {j} > {settings.ML_MAX_DERIV} on the integral path")

    y = -z
    pw = 1.0 / p.alpha
    c = (1.0 - p.beta) / p.alpha
    X = y**pw
    coeffs = np.array(_leibniz_coefficients(c, pw, j))
    moments, errors = _laplace_moments(p, X, j)
    prefactor = (-1.0) ** j * y ** (c - j - pw) / math.pi
    value = prefactor * float(np.dot(coeffs, moments))
    abs_err = abs(prefactor) * float(np.dot(np.abs(coeffs), errors))
    rel = abs_err / abs(value) if value != 0 else math.inf
    if rel > settings.ML_INTEGRAL_TOL:
        raise QuadratureFailure(f"integral branch error {rel:.2e} above tolerance at z={z}, j={j}")
    return MLResult(value=value, est_rel_error=rel, branch=Branch.INTEGRAL)


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def ml_eval(pt: MLPoint) -> MLResult:
    p, z, j = pt.params, pt.z, pt.deriv_order
    radius = settings.ML_SERIES_RADIUS
    if z > radius:
        raise Unsupported(f"z={z} lies in the growth region z > {radius}")
    if abs(z) <= radius:
        return ml_series(p, z, j)
    if not p.integral_ok:
        if abs(z) <= settings.ML_EXTENDED_RADIUS:
            return ml_series(p, z, j, radius=settings.ML_EXTENDED_RADIUS)
        raise Unsupported(
            f"alpha={p.alpha}, beta={p.beta} has no integral representation and |z|={abs(z)} "
            f"is beyond the extended series reach {settings.ML_EXTENDED_RADIUS}"
        )
    return ml_integral(p, z, j)


def ml_value(alpha: float, beta: float, z: float, j: int = 0) -> float:
    return ml_eval(MLPoint(params=MLParams(alpha=alpha, beta=beta), z=z, deriv_order=j)).value


def ml_decay_bound(p: MLParams, k: int, z: float) -> float:
    """Envelope |z|^{-(beta-1)_+/alpha - k} (1+|z|)^{-c+(beta-1)_+/alpha}, constant omitted."""
    _require_integral_params(p)
    if not z < 0:
        raise InvalidParams(f"decay envelope needs z < 0, got {z}")
    if k < 0:
        raise InvalidParams(f"k must be >= 0, got {k}")
    shift = max(p.beta - 1.0, 0.0) / p.alpha
    c = 2.0 if p.alpha == p.beta else 1.0
    y = -z
    return y ** (-shift - k) * (1.0 + y) ** (-c + shift)


def ml_asymptotic(p: MLParams, z: float, terms: int = 1) -> float:
    """-sum_{k=1}^{terms} z^{-k} / Gamma(beta - alpha*k), valid as z -> -inf."""
    if not z < 0:
        raise InvalidParams(f"asymptotic expansion is taken along z < 0, got {z}")
    k = np.arange(1, terms + 1)
    return float(-np.sum(z ** (-k.astype(float)) * rgamma(p.beta - p.alpha * k)))


# ---------------------------------------------------------------------------
# vectorized evaluation on grids
# ---------------------------------------------------------------------------


@lru_cache(maxsize=128)
def _safe_series_radius(alpha: float, beta: float, j: int) -> float:
    """Largest radius <= z_sw where the largest series term stays below 1e3."""
    k = np.arange(j, j + 6000, dtype=float)
    log_coef, _ = _log_coefficients(alpha, beta, k, j)
    limit = math.log(_SAFE_CANCELLATION)

    def worst(radius: float) -> float:
        return float(np.max(log_coef + (k - j) * math.log(radius)))

    hi = settings.ML_SERIES_RADIUS
    if worst(hi) <= limit:
        return hi
    lo = 0.5
    if worst(lo) > limit:
        return lo
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if worst(mid) <= limit else (lo, mid)
    return lo


def _series_array(alpha: float, beta: float, z: np.ndarray, j: int) -> np.ndarray:
    total = np.zeros_like(z)
    comp = np.zeros_like(z)
    z_max = float(np.max(np.abs(z))) if z.size else 0.0
    with np.errstate(divide="ignore"):
        log_z = np.log(np.abs(z))
    z_sign = np.where(z < 0, -1.0, 1.0)
    prev_bound = math.inf
    k = j
    while True:
        log_coef, sign = _log_coefficients(alpha, beta, np.array([float(k)]), j)
        log_coef, sign = float(log_coef[0]), float(sign[0])
        n = k - j
        if n == 0:
            term = np.full_like(z, sign * math.exp(log_coef))
        else:
            with np.errstate(invalid="ignore"):
                term = sign * np.exp(log_coef + n * log_z) * (z_sign if n % 2 else 1.0)
        # Kahan compensation
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if z_max == 0.0:
            break
        bound = math.exp(log_coef + n * math.log(z_max)) if np.isfinite(log_coef) else 0.0
        if n > 0 and bound < prev_bound and bound < 1e-18:
            break
        prev_bound = bound
        k += 1
        if n > settings.ML_SERIES_MAX_TERMS:
            raise NonConvergence("vectorized series did not converge")
    return total


def _integral_array(p: MLParams, z: np.ndarray, j: int) -> np.ndarray:
    y = -z
    pw = 1.0 / p.alpha
    c = (1.0 - p.beta) / p.alpha
    X = y**pw
    coeffs = np.array(_leibniz_coefficients(c, pw, j))
    u, w = graded_laplace_rule(_grading(p))
    weighted = w * np.exp(-u)
    moment_weights = coeffs @ (u[None, :] ** np.arange(j + 1)[:, None])
    psi = psi_kernel(p, u[:, None] / X[None, :])
    combined = (weighted * moment_weights) @ psi
    return (-1.0) ** j * y ** (c - j - pw) / math.pi * combined


def ml_eval_array(p: MLParams, z, j: int = 0, *, threads: int | None = None) -> np.ndarray:
    """E^{(j)}_{alpha,beta}(z) for every entry of ``z`` (shape preserved)."""
    z_arr = np.asarray(z, dtype=float)
    flat = z_arr.ravel()
    if np.any(~np.isfinite(flat)):
        raise InvalidParams("non-finite argument in ml_eval_array")
    if np.any(flat > settings.ML_SERIES_RADIUS):
        raise Unsupported(f"arguments above {settings.ML_SERIES_RADIUS} lie in the growth region")

    out = np.empty_like(flat)
    near = np.abs(flat) <= _safe_series_radius(p.alpha, p.beta, j)
    if near.any():
        out[near] = _series_array(p.alpha, p.beta, flat[near], j)
    # no cancellation for z > 0
    pointwise = ~near & (flat > 0)
    if pointwise.any():
        out[pointwise] = [ml_eval(MLPoint(params=p, z=float(v), deriv_order=j)).value for v in flat[pointwise]]
    far = ~near & (flat < 0)
    if far.any():
        if not p.integral_ok or j > settings.ML_MAX_DERIV:
            out[far] = [ml_eval(MLPoint(params=p, z=float(v), deriv_order=j)).value for v in flat[far]]
        else:
            args = flat[far]
            chunks = [args[i : i + _ARRAY_CHUNK] for i in range(0, args.size, _ARRAY_CHUNK)]
            workers = threads or settings.THREADS
            if workers > 1 and len(chunks) > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    parts = list(pool.map(lambda chunk: _integral_array(p, chunk, j), chunks))
            else:
                parts = [_integral_array(p, chunk, j) for chunk in chunks]
            out[far] = np.concatenate(parts)
    return out.reshape(z_arr.shape)
