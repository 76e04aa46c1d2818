import heapq
import itertools
import logging
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss

from app.core.config import settings
from app.core.exceptions import QuadratureFailure

logger = logging.getLogger(__name__)

Integrand = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=32)
def gauss_legendre_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    nodes, weights = leggauss(order)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _panel(f: Integrand, lo: float, hi: float, order: int) -> np.ndarray:
    nodes, weights = gauss_legendre_rule(order)
    half = 0.5 * (hi - lo)
    values = np.asarray(f(0.5 * (hi + lo) + half * nodes))
    return half * np.tensordot(weights, values, axes=(0, 0))


@dataclass
class QuadResult:
    value: np.ndarray | complex | float
    abs_error: np.ndarray | float
    intervals: int


def adaptive_gauss_legendre(
    f: Integrand,
    a: float,
    b: float,
    *,
    rel_tol: float = 1e-12,
    abs_tol: float = 0.0,
    order: int = 15,
    max_depth: int | None = None,
    max_intervals: int = 50_000,
    floor_ratio: float = 0.0,
) -> QuadResult:
    """Globally adaptive Gauss-Legendre quadrature.

    ``f`` takes an array of nodes and returns values whose leading axis matches
    the nodes; trailing axes are integrated component-wise. Each interval is
    estimated by comparing one ``order``-point panel against two half panels;
    the interval with the largest error is bisected until every component meets
    ``max(abs_tol, rel_tol*|I|)``; ``floor_ratio`` lowers the
    bar for components much smaller than the largest one.
    """
    max_depth = settings.ML_QUAD_MAX_DEPTH if max_depth is None else max_depth
    counter = itertools.count()

    def estimate(lo: float, hi: float) -> tuple[np.ndarray, np.ndarray]:
        coarse = _panel(f, lo, hi, order)
        mid = 0.5 * (lo + hi)
        fine = _panel(f, lo, mid, order) + _panel(f, mid, hi, order)
        return fine, np.abs(fine - coarse)

    value, error = estimate(a, b)
    scale = np.maximum(np.abs(value), np.finfo(float).tiny)
    heap = [(-float(np.max(error / scale)), next(counter), a, b, 0, value, error)]
    total, total_err = value.copy(), error.copy()

    while True:
        magnitude = np.abs(total)
        target = np.maximum(abs_tol, rel_tol * np.maximum(magnitude, floor_ratio * np.max(magnitude)))
        if np.all(total_err <= target):
            break
        if len(heap) >= max_intervals:
            raise QuadratureFailure(f"adaptive quadrature exceeded {max_intervals} intervals")
        _, _, lo, hi, depth, value, error = heapq.heappop(heap)
        if depth + 1 > max_depth:
            raise QuadratureFailure(
                f"adaptive refinement exceeded depth {max_depth} on [{lo:.3e}, {hi:.3e}]"
            )
        total = total - value
        total_err = total_err - error
        mid = 0.5 * (lo + hi)
        for left, right in ((lo, mid), (mid, hi)):
            sub_value, sub_error = estimate(left, right)
            total = total + sub_value
            total_err = total_err + sub_error
            heapq.heappush(
                heap,
                (-float(np.max(sub_error / scale)), next(counter), left, right, depth + 1, sub_value, sub_error),
            )

    # Re-sum in interval order so the result does not depend on the refinement history.
    parts = sorted(heap, key=lambda item: item[2])
    total = sum((item[5] for item in parts[1:]), parts[0][5])
    total_err = sum((item[6] for item in parts[1:]), parts[0][6])
    return QuadResult(value=total, abs_error=total_err, intervals=len(heap))


@lru_cache(maxsize=64)
def graded_laplace_rule(
    grading: float, upper: float = 50.0, order: int = 16, levels: int = 40, width: float = 2.0
) -> tuple[np.ndarray, np.ndarray]:
    """Fixed rule for integrals over u in [0, upper] with an algebraic endpoint at 0.

    On [0, 1] the substitution u = v**grading is combined with geometric panels
    in v; on [1, upper] uniform panels of the given width are used. Returns
    nodes and weights with the Jacobian folded in.
    """
    nodes, weights = gauss_legendre_rule(order)
    edges = np.concatenate(([0.0], 0.5 ** np.arange(levels, -1, -1)))
    lo, hi = edges[:-1, None], edges[1:, None]
    v = 0.5 * (hi + lo) + 0.5 * (hi - lo) * nodes
    wv = 0.5 * (hi - lo) * weights
    u_inner = v**grading
    w_inner = wv * grading * v ** (grading - 1.0)

    panels = max(1, int(np.ceil((upper - 1.0) / width)))
    outer_edges = np.linspace(1.0, upper, panels + 1)
    lo, hi = outer_edges[:-1, None], outer_edges[1:, None]
    u_outer = 0.5 * (hi + lo) + 0.5 * (hi - lo) * nodes
    w_outer = 0.5 * (hi - lo) * weights

    u = np.concatenate((u_inner.ravel(), u_outer.ravel()))
    w = np.concatenate((w_inner.ravel(), w_outer.ravel()))
    u.setflags(write=False)
    w.setflags(write=False)
    return u, w
