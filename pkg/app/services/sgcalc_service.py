"""Variable-coefficient symbols: hypotheses, composition, quantization, parametrix kernels and solvers."""

import logging
import math
from collections.abc import Callable
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P

from app.core.config import settings
from app.core.exceptions import (
    HypothesisViolation,
    InsufficientDerivOrder,
    InvalidParams,
    ShapeMismatch,
    TruncationUnsupported,
)
from app.schemas.caputo import FracGrid
from app.schemas.mlf import MLParams
from app.schemas.multiplier import GridSpec, SourceSamples, StateField
from app.schemas.sgcalc import (
    HypoReport,
    KernelExpansion,
    KernelKind,
    KernelTerm,
    ParametrixResult,
    PhaseGrid,
    SymbolField,
)
from app.services.caputo_service import product_weights, solve_operator_fode
from app.services.mlf_service import ml_eval_array
from app.services.parametrix_service import Correctors, build_correctors

logger = logging.getLogger(__name__)

MAX_FAILING_POINTS = 50
A1_TOLERANCE = 1e-12


# Symbol registry


def _separable(name: str, coef_x, coef_xi, **orders) -> SymbolField:
    coef_x = np.asarray(coef_x, dtype=float)
    coef_xi = np.asarray(coef_xi, dtype=float)

    def value(x, xi):
        return P.polyval(x, coef_x) * P.polyval(xi, coef_xi)

    def deriv(theta, sigma, x, xi):
        return P.polyval(x, P.polyder(coef_x, theta)) * P.polyval(xi, P.polyder(coef_xi, sigma))

    return SymbolField(
        name=name,
        eval=value,
        deriv=deriv,
        x_independent=len(np.trim_zeros(coef_x, "b")) <= 1,
        **orders,
    )


def poly_sg(**overrides) -> SymbolField:
    """(1 + x^2)(1 + xi^2), an SG-hypoelliptic symbol of order (2, 2)."""
    orders = {"m": 2.0, "mu": 2.0, "m_hypo": 2.0, "mu_hypo": 2.0, "R": 0.0} | overrides
    return _separable("poly_sg", [1.0, 0.0, 1.0], [1.0, 0.0, 1.0], **orders)


def multiplier_xi2(kappa: float = 1.0, **overrides) -> SymbolField:
    """kappa xi^2, independent of x."""
    if kappa < 0:
        raise InvalidParams(f"diffusivity must be non-negative, got {kappa}")
    orders = {"m": 1.0, "mu": 2.0, "m_hypo": 0.0, "mu_hypo": 2.0, "R": 0.0} | overrides
    return _separable("multiplier_xi2", [1.0], [0.0, 0.0, kappa], **orders)


def custom(coef_x, coef_xi, **overrides) -> SymbolField:
    """p(x) q(xi) with ascending coefficient lists."""
    if len(coef_x) == 0 or len(coef_xi) == 0:
        raise InvalidParams("coef_x and coef_xi must be non-empty")
    deg_x = max(len(np.trim_zeros(np.asarray(coef_x, dtype=float), "b")) - 1, 0)
    deg_xi = max(len(np.trim_zeros(np.asarray(coef_xi, dtype=float), "b")) - 1, 0)
    orders = {"m": float(max(deg_x, 1)), "mu": float(max(deg_xi, 1)), "m_hypo": 0.0, "mu_hypo": 0.0} | overrides
    return _separable("custom", coef_x, coef_xi, **orders)


SYMBOLS: dict[str, Callable[..., SymbolField]] = {
    "poly_sg": poly_sg,
    "multiplier_xi2": multiplier_xi2,
    "custom": custom,
}


def build_symbol(name: str, **params) -> SymbolField:
    try:
        factory = SYMBOLS[name]
    except KeyError:
        raise InvalidParams(f"unknown symbol {name!r}; choose from {sorted(SYMBOLS)}") from None
    return factory(**params)


# Diagnostics


def _label(theta: int, sigma: int) -> str:
    return f"{theta},{sigma}"


def check_hypotheses(a: SymbolField, grid: PhaseGrid, *, order: int = 3) -> HypoReport:
    """Fit the constants of the SG estimates and hypoellipticity conditions on the sample."""
    if order > a.max_order:
        raise InsufficientDerivOrder(f"{a.name} provides derivatives up to {a.max_order}, need {order}")
    jx, jxi = grid.japanese()
    values = grid.values(a)
    exterior = np.abs(grid.x) + np.abs(grid.xi) >= a.R

    h1 = {}
    for theta in range(order + 1):
        for sigma in range(order + 1 - theta):
            weight = jx ** (theta - a.m) * jxi ** (sigma - a.mu)
            h1[_label(theta, sigma)] = float(np.max(np.abs(grid.derivative(a, theta, sigma)) * weight))

    margin = values * jx ** (-a.m_hypo) * jxi ** (-a.mu_hypo)
    h2_margin = float(np.min(margin[exterior])) if exterior.any() else math.inf
    below = exterior & (margin <= 0)
    failing = [("H2", float(x), float(xi)) for x, xi in zip(grid.x[below], grid.xi[below])]
    negative = values < 0
    failing += [("sign", float(x), float(xi)) for x, xi in zip(grid.x[negative], grid.xi[negative])]

    positive = exterior & (values > 0)
    h3 = {}
    for theta in range(order + 1):
        for sigma in range(order + 1 - theta):
            if theta == sigma == 0:
                continue
            if not positive.any():
                h3[_label(theta, sigma)] = math.inf
                continue
            ratio = np.abs(grid.derivative(a, theta, sigma)) * jx**theta * jxi**sigma / values
            h3[_label(theta, sigma)] = float(np.max(ratio[positive]))

    report = HypoReport(
        h1_ratio_max=max(h1.values()),
        h2_lower_margin=h2_margin,
        h3_ratio_max=max(h3.values()) if h3 else 0.0,
        failing_points=failing[:MAX_FAILING_POINTS],
        failing_count=len(failing),
        h1_ratios=h1,
        h3_ratios=h3,
    )
    if failing:
        logger.warning(f"[SG] {a.name}: {len(failing)} sample points violate H2 (margin {h2_margin:.3e})")
    else:
        logger.debug(f"[SG] {a.name}: H1 {report.h1_ratio_max:.3e}, H2 {h2_margin:.3e}, H3 {report.h3_ratio_max:.3e}")
    return report


def admissible_lambda(a: SymbolField, grid: PhaseGrid, r: float) -> float:
    """max(10, C00^(1/r) + 1) with C00 = sup |a| <x>^(-m) <xi>^(-mu) on the sample."""
    jx, jxi = grid.japanese()
    c00 = float(np.max(np.abs(grid.values(a)) * jx ** (-a.m) * jxi ** (-a.mu)))
    return max(10.0, c00 ** (1.0 / r) + 1.0)


# Composition and quantization


def compose_expand(p: SymbolField, q: SymbolField, grid: PhaseGrid, order: int) -> np.ndarray:
    """sum_{alpha <= order} (-i)^alpha / alpha! d_xi^alpha p d_x^alpha q on the phase grid."""
    if order < 0:
        raise InvalidParams(f"composition order must be non-negative, got {order}")
    for symbol in (p, q):
        if order > symbol.max_order:
            raise InsufficientDerivOrder(f"{symbol.name} provides derivatives up to {symbol.max_order}, need {order}")
    out = np.zeros(grid.shape, dtype=complex)
    for alpha in range(order + 1):
        factor = (-1j) ** alpha / math.factorial(alpha)
        out += factor * grid.derivative(p, 0, alpha) * grid.derivative(q, alpha, 0)
    return out


@lru_cache(maxsize=8)
def _phase_matrix(n: int) -> np.ndarray:
    index = np.arange(n)
    matrix = np.exp(2j * np.pi * (np.outer(index, index) % n) / n)
    matrix.setflags(write=False)
    return matrix


def quantize(p, u: StateField) -> StateField:
    """Kohn-Nirenberg rule (Op(p)u)(x_m) = (1/n) sum_k exp(i x_m xi_k) p(x_m, xi_k) u_hat(xi_k)."""
    p = np.asarray(p)
    n = u.grid.n
    if u.grid.dim != 1 or p.shape != (n, n):
        raise ShapeMismatch(f"symbol shape {p.shape} does not match a 1D grid with n={n}")
    u_hat = np.fft.fft(u.values)
    values = ((_phase_matrix(n) * p) @ u_hat) / n
    return StateField(grid=u.grid, values=values, time=u.time)


def quantize_matrix(p) -> np.ndarray:
    """Dense matrix of Op(p) acting on nodal values."""
    p = np.asarray(p)
    n = p.shape[0]
    if p.shape != (n, n):
        raise ShapeMismatch(f"symbol values must be square, got {p.shape}")
    phase = _phase_matrix(n)
    return ((phase * p) @ phase.conj()) / n


# Parametrix


def _check_order(r: float) -> None:
    if not 0 < r < 1:
        raise InvalidParams(f"fractional order r must lie in (0, 1), got {r}")


def _correctors(a: SymbolField, J: int) -> Correctors:
    if J < 0:
        raise InvalidParams(f"truncation order must be non-negative, got {J}")
    if J > settings.SG_MAX_J:
        raise TruncationUnsupported(f"J={J} exceeds the supported maximum {settings.SG_MAX_J}")
    if a.max_order < 2 * J + 2:
        raise InsufficientDerivOrder(f"{a.name} provides derivatives up to {a.max_order}, J={J} needs {2 * J + 2}")
    return build_correctors(J)


def _atom_values(a: SymbolField, grid: PhaseGrid):
    def atom(theta: int, sigma: int) -> np.ndarray:
        if theta + sigma > a.max_order:
            raise InsufficientDerivOrder(
                f"{a.name} provides derivatives up to {a.max_order}, need ({theta},{sigma})"
            )
        return grid.derivative(a, theta, sigma)

    return atom


def _reciprocal(a: SymbolField, grid: PhaseGrid, s: float, r: float) -> np.ndarray:
    values = grid.values(a)
    if np.any(values < 0):
        raise HypothesisViolation(f"{a.name} takes negative values on the grid")
    b = s**r + values
    if np.any(b == 0):
        raise HypothesisViolation(f"b_s = s^r + a vanishes on the grid (s={s})")
    return 1.0 / b


def kernel_expansion(a: SymbolField, grid: PhaseGrid, J: int, r: float) -> KernelExpansion:
    """A_0..A_{2J} on the phase grid; no s enters."""
    _check_order(r)
    system = _correctors(a, J)
    atom = _atom_values(a, grid)
    terms = [
        KernelTerm(j=j, A=system.algebra.evaluate(system.coefficient(j), atom, grid.shape))
        for j in range(system.term_count)
    ]
    if J >= 1:
        leak = float(np.max(np.abs(terms[1].A)))
        if leak > A1_TOLERANCE:
            logger.error(f"[SG] A_1 should vanish but reaches {leak:.3e} for {a.name}")
    return KernelExpansion(r=r, J=J, terms=terms)


def parametrix_terms(a: SymbolField, grid: PhaseGrid, J: int, s: float, *, r: float) -> ParametrixResult:
    """A_j (s-free) and the summed corrector c_s = sum_{k<=J} c_k evaluated at s."""
    _check_order(r)
    lam = admissible_lambda(a, grid, r)
    if s < lam:
        raise InvalidParams(f"s={s} is below the admissible threshold lambda={lam:.4g}")
    w = _reciprocal(a, grid, s, r)
    expansion = kernel_expansion(a, grid, J, r)
    system = build_correctors(J)
    c_s = system.algebra.evaluate(system.total, _atom_values(a, grid), grid.shape, w)
    logger.debug(f"[SG] parametrix {a.name}: J={J}, s={s}, lambda={lam:.4g}")
    return ParametrixResult(expansion=expansion, c_s=c_s, s=s, lam=lam)


def parametrix_residual(
    a: SymbolField, grid: PhaseGrid, J: int, s: float, test_fn, *, r: float
) -> float:
    """||Op(b_s) Op(c_s) phi - phi|| / ||phi||."""
    phi = test_fn if isinstance(test_fn, StateField) else StateField(grid=grid.grid, values=test_fn(grid.grid.axis()))
    result = parametrix_terms(a, grid, J, s, r=r)
    b = s**r + grid.values(a)
    image = quantize(b, quantize(result.c_s, phi))
    residual = float(np.linalg.norm(image.values - phi.values) / np.linalg.norm(phi.values))
    logger.debug(f"[SG] residual {a.name} J={J} s={s}: {residual:.3e}")
    return residual


def corrector_seminorms(
    a: SymbolField, grid: PhaseGrid, J: int, s: float, r: float, k_max: int = 2
) -> dict[int, float]:
    """|||c_s|||_k = max_{theta+sigma<=k} sup |d_x^theta d_xi^sigma c_s| <x>^(m'+theta) <xi>^(mu'+sigma)."""
    _check_order(r)
    if k_max > 2:
        raise InvalidParams("seminorms are available up to k_max = 2")
    system = _correctors(a, J)
    w = _reciprocal(a, grid, s, r)
    atom = _atom_values(a, grid)
    jx, jxi = grid.japanese()
    algebra, total = system.algebra, system.total

    seminorms, running = {}, 0.0
    for k in range(k_max + 1):
        for theta in range(k + 1):
            sigma = k - theta
            derivative = algebra.dxi(algebra.dx(total, theta), sigma)
            values = algebra.evaluate(derivative, atom, grid.shape, w)
            weight = jx ** (a.m_hypo + theta) * jxi ** (a.mu_hypo + sigma)
            running = max(running, float(np.max(np.abs(values) * weight)))
        seminorms[k] = running
    return seminorms


def assemble_kernels(
    a: SymbolField,
    grid: PhaseGrid,
    J: int,
    r: float,
    t: float,
    *,
    expansion: KernelExpansion | None = None,
    threads: int | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """K0(t) and K1(t) on the phase grid; K1 is None at t = 0."""
    if t < 0:
        raise InvalidParams(f"time must be non-negative, got {t}")
    expansion = expansion or kernel_expansion(a, grid, J, r)
    values = grid.values(a)
    z = -(t**r) * values
    K0 = np.zeros(grid.shape, dtype=complex)
    K1 = None if t == 0 else np.zeros(grid.shape, dtype=complex)
    for term in expansion.terms:
        if not np.any(term.A):
            continue
        j = term.j
        scale = 1.0 / math.factorial(j)
        K0 += scale * t ** expansion.time_exponent(j, KernelKind.K0) * term.A * ml_eval_array(
            MLParams(alpha=r, beta=KernelExpansion.ml_beta(KernelKind.K0, r)), z, j, threads=threads
        )
        if K1 is not None:
            K1 += scale * t ** expansion.time_exponent(j, KernelKind.K1) * term.A * ml_eval_array(
                MLParams(alpha=r, beta=KernelExpansion.ml_beta(KernelKind.K1, r)), z, j, threads=threads
            )
    return K0, K1


def _regular_k1(
    expansion: KernelExpansion, values: np.ndarray, r: float, tau: float, threads: int | None = None
) -> np.ndarray:
    """tau^(1-r) K1(tau), finite at tau = 0."""
    z = -(tau**r) * values
    out = np.zeros(values.shape, dtype=complex)
    for term in expansion.terms:
        if not np.any(term.A):
            continue
        j = term.j
        E = ml_eval_array(MLParams(alpha=r, beta=r), z, j, threads=threads)
        out += tau ** (j * r) / math.factorial(j) * term.A * E
    return out


# Solvers


def solve_var_hom(
    a: SymbolField, u0: StateField, r: float, t: float, J: int, *, threads: int | None = None
) -> StateField:
    """u(t) = Op(K0(t)) u0."""
    _check_order(r)
    if t < 0:
        raise InvalidParams(f"time must be non-negative, got {t}")
    grid = PhaseGrid(u0.grid)
    report = check_hypotheses(a, grid)
    if any(label == "sign" for label, _, _ in report.failing_points):
        raise HypothesisViolation(f"{a.name} is negative somewhere on the grid")
    if t == 0:
        return StateField(grid=u0.grid, values=u0.values.copy(), time=0.0)
    K0, _ = assemble_kernels(a, grid, J, r, t, threads=threads)
    u = quantize(K0, u0)
    u.time = t
    return u


def solve_var_full(
    a: SymbolField,
    u0: StateField,
    f: SourceSamples | Callable[[float], np.ndarray] | None,
    r: float,
    t: float,
    J: int,
    quad_steps: int | None = None,
    *,
    threads: int | None = None,
) -> StateField:
    """Op(K0(t)) u0 + int_0^t Op(K1(tau)) f(t - tau) d tau with exact tau^(r-1) weights."""
    u = solve_var_hom(a, u0, r, t, J, threads=threads)
    if f is None or t == 0:
        return u
    if isinstance(f, SourceSamples):
        samples = f
        if not np.isclose(samples.t, t):
            raise InvalidParams(f"source sampled up to t={samples.t}, requested t={t}")
    else:
        steps = settings.DUHAMEL_QUAD_STEPS if quad_steps is None else quad_steps
        samples = SourceSamples.from_callable(u0.grid, f, t, steps)
    K = samples.steps
    if K < 8:
        raise InvalidParams(f"quad_steps must be at least 8, got {K}")

    grid = PhaseGrid(u0.grid)
    expansion = kernel_expansion(a, grid, J, r)
    values = grid.values(a)
    h = t / K
    weights = h**r * product_weights(r, K)
    acc = np.zeros(u0.grid.shape, dtype=complex)
    for k in range(K + 1):
        kernel = _regular_k1(expansion, values, r, k * h, threads)
        source = StateField(grid=u0.grid, values=samples.values[K - k])
        acc += weights[k] * quantize(kernel, source).values
    return StateField(grid=u0.grid, values=u.values + acc, time=t)


def reference_var_hom(a: SymbolField, u0: StateField, r: float, t: float, steps: int) -> StateField:
    """L1 in time with the dense quantized Op(a) in space."""
    _check_order(r)
    grid = PhaseGrid(u0.grid)
    operator = quantize_matrix(grid.values(a))
    history = solve_operator_fode(operator, u0.values, FracGrid(r=r, t_max=t, steps=steps))
    return StateField(grid=u0.grid, values=history[-1], time=t)


def kernel_decay_constant(a: SymbolField, grid: PhaseGrid, J: int, r: float, times) -> float:
    """max over t and the grid of |K0(t)| (1 + t^r a)."""
    expansion = kernel_expansion(a, grid, J, r)
    values = grid.values(a)
    worst = 0.0
    for t in times:
        K0, _ = assemble_kernels(a, grid, J, r, float(t), expansion=expansion)
        worst = max(worst, float(np.max(np.abs(K0) * (1.0 + float(t) ** r * values))))
    return worst


def phase_grid(n: int, L: float) -> PhaseGrid:
    return PhaseGrid(GridSpec(dim=1, n=n, L=L))
