"""Forward Laplace quadrature and Talbot-contour inversion.

The two directions are written independently of the Mittag-Leffler code so they
can serve as an oracle for every transform pair used by the solvers.
"""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.special import gamma

from app.core.config import settings
from app.core.exceptions import ContourFailure, InvalidParams, TailNotNegligible
from app.schemas.laplace import LaplaceEstimate, PairReport, TalbotConfig, TransformSample
from app.schemas.mlf import MLParams, MLPoint
from app.services.mlf_service import ml_eval
from app.services.quadrature_service import adaptive_gauss_legendre

logger = logging.getLogger(__name__)

TimeFn = Callable[[np.ndarray], np.ndarray]
TransformFn = Callable[[np.ndarray], np.ndarray]

# Cotangent contour constants tuned for double precision.
_OPT_SHIFT = -0.6122
_OPT_MU = 0.5017
_OPT_NU = 0.6407
_OPT_IMAG = 0.2645

# the truncation check samples f on [T, _TAIL_WINDOW * T]
_TAIL_WINDOW = 2.0
_TAIL_SAMPLES = 65


def forward_laplace(
    f: TimeFn,
    s: complex,
    T: float,
    *,
    sigma: float = 0.0,
    tol: float | None = None,
) -> LaplaceEstimate:
    """Truncated transform int_0^T exp(-s t) f(t) dt.

    ``sigma`` declares an endpoint behaviour f(t) ~ t**sigma (sigma > -1); the
    substitution t = T v**(1/(1+sigma)) grades the nodes towards 0.
    """
    tol = settings.LAPLACE_TOL if tol is None else tol
    s = complex(s)
    if s.real <= 0:
        raise InvalidParams(f"forward transform needs Re(s) > 0, got {s}")
    if T <= 0:
        raise InvalidParams(f"truncation time must be positive, got {T}")
    if sigma <= -1:
        raise InvalidParams(f"endpoint exponent must exceed -1, got {sigma}")

    window = np.linspace(T, _TAIL_WINDOW * T, _TAIL_SAMPLES)
    edge = np.abs(np.asarray(f(window), dtype=complex)) * np.exp(-s.real * window)
    tail = float(np.max(edge))
    if not tail <= tol:
        raise TailNotNegligible(
            f"max e^(-Re(s)t)*|f(t)| over [T, {_TAIL_WINDOW:g}T] = {tail:.2e} exceeds {tol:.1e} (s={s}, T={T})"
        )

    grading = 1.0 / (1.0 + sigma)

    def integrand(v):
        t = T * v**grading
        jac = T * grading * v ** (grading - 1.0)
        return jac * np.exp(-s * t) * np.asarray(f(t), dtype=complex)

    result = adaptive_gauss_legendre(integrand, 0.0, 1.0, rel_tol=1e-12, abs_tol=0.01 * tol)
    logger.debug(f"[LAPLACE] forward s={s} T={T}: {result.intervals} intervals")
    return LaplaceEstimate(value=complex(result.value), abs_error=float(result.abs_error) + tail)


def sample_transform(
    f: TimeFn, s_values, horizon: float, *, sigma: float = 0.0, tol: float | None = None
) -> TransformSample:
    """Forward transform at every node, each truncated at T = horizon / Re(s)."""
    nodes = [complex(s) for s in s_values]
    f_hat = [forward_laplace(f, s, horizon / s.real, sigma=sigma, tol=tol).value for s in nodes]
    return TransformSample(s_values=nodes, f_hat=f_hat)


def _contour(cfg: TalbotConfig, scale: float) -> tuple[np.ndarray, np.ndarray]:
    n = cfg.node_count
    theta = -np.pi + (np.arange(n) + 0.5) * (2.0 * np.pi / n)
    if cfg.contour == "classical":
        r = n / (2.0 * scale)
        cot = 1.0 / np.tan(theta)
        s = r * theta * (cot + 1j)
        ds = r * (cot - theta / np.sin(theta) ** 2 + 1j)
    else:
        r = n / scale
        cot = 1.0 / np.tan(_OPT_NU * theta)
        s = r * (_OPT_SHIFT + _OPT_MU * theta * cot + 1j * _OPT_IMAG * theta)
        ds = r * (_OPT_MU * cot - _OPT_MU * _OPT_NU * theta / np.sin(_OPT_NU * theta) ** 2 + 1j * _OPT_IMAG)
    return s, ds


def talbot_invert(F: TransformFn, t: float, cfg: TalbotConfig | None = None) -> float:
    """Midpoint-rule Bromwich integral on a Talbot contour; F must accept complex arrays."""
    cfg = cfg or TalbotConfig(node_count=settings.TALBOT_NODES)
    if t <= 0:
        raise InvalidParams(f"inversion time must be positive, got {t}")
    s, ds = _contour(cfg, cfg.time_scale or t)
    with np.errstate(over="ignore", invalid="ignore"):
        summands = np.exp(s * t) * np.asarray(F(s), dtype=complex) * ds
    if not np.all(np.isfinite(summands)):
        raise ContourFailure(f"non-finite Talbot summand at t={t} (contour scale {cfg.time_scale or t})")
    total = 0.0j
    for value in summands:
        total += value
    return float((total / (1j * cfg.node_count)).real)


def talbot_invert_many(F: TransformFn, times, cfg: TalbotConfig | None = None) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    return np.array([talbot_invert(F, float(t), cfg) for t in times.ravel()]).reshape(times.shape)


def ml_pair_transform(p: MLParams, mu: float, j: int) -> TransformFn:
    """s -> s^(alpha-beta) / (s^alpha - mu)^(j+1)."""

    def transform(s):
        s = np.asarray(s, dtype=complex)
        return s ** (p.alpha - p.beta) / (s**p.alpha - mu) ** (j + 1)

    return transform


def verify_ml_pair(
    p: MLParams, mu: float, j: int, t_grid, cfg: TalbotConfig | None = None
) -> PairReport:
    if mu > 0:
        raise InvalidParams(f"mu must be <= 0, got {mu}")
    times = [float(t) for t in t_grid]
    if not times or min(times) <= 0:
        raise InvalidParams("t_grid must be a non-empty subset of (0, inf)")

    transform = ml_pair_transform(p, mu, j)
    time_side, s_side = [], []
    for t in times:
        ml = ml_eval(MLPoint(params=p, z=mu * t**p.alpha, deriv_order=j)).value
        time_side.append(t ** (j * p.alpha + p.beta - 1.0) / math.factorial(j) * ml)
        s_side.append(talbot_invert(transform, t, cfg))

    errors = [abs(a - b) / abs(a) if a != 0 else abs(b) for a, b in zip(time_side, s_side)]
    report = PairReport(
        alpha=p.alpha,
        beta=p.beta,
        mu=mu,
        j=j,
        t_grid=times,
        time_side=time_side,
        s_side=s_side,
        max_rel_error=max(errors),
    )
    logger.info(
        f"[LAPLACE] pair alpha={p.alpha} beta={p.beta} mu={mu} j={j}: max rel err {report.max_rel_error:.2e}"
    )
    return report


def watson_ratio_origin(
    psi: TimeFn, A: float, delta: float, s: float, *, T: float | None = None, tol: float | None = None
) -> float:
    """forward(psi)(s) * s^(delta+1) / (A Gamma(delta+1)); tends to 1 as s -> inf when psi ~ A t^delta at 0."""
    T = 50.0 / s if T is None else T
    value = forward_laplace(psi, s, T, sigma=min(delta, 0.0), tol=tol).value
    return float((value * s ** (delta + 1.0) / (A * gamma(delta + 1.0))).real)


def watson_ratio_infinity(
    psi: TimeFn,
    B: float,
    sigma: float,
    s: float,
    *,
    endpoint_sigma: float = 0.0,
    T: float | None = None,
    tol: float | None = None,
) -> float:
    """forward(psi)(s) / (B Gamma(sigma+1) s^(-sigma-1)); tends to 1 as s -> 0+ when psi ~ B t^sigma at inf."""
    T = 40.0 / s if T is None else T
    value = forward_laplace(psi, s, T, sigma=endpoint_sigma, tol=tol).value
    return float((value / (B * gamma(sigma + 1.0) * s ** (-sigma - 1.0))).real)
