"""Exact polynomial bookkeeping for the parametrix correctors.

Every corrector is a polynomial over the Gaussian rationals in w = 1/b_s and the
derivative atoms a_{theta,sigma} = d_x^theta d_xi^sigma a (1D phase space).
Derivations follow from

    d_x a_{theta,sigma} = a_{theta+1,sigma},  d_x w = -w^2 a_{1,0},
    d_xi a_{theta,sigma} = a_{theta,sigma+1}, d_xi w = -w^2 a_{0,1},

and multiplication by b_s lowers the power of w by one. Nothing refers to s,
so the coefficient of w^(j+1) in the summed corrector is the s-free A_j.

The SG degree of a monomial is the number of x-derivatives it carries. Every
term produced by b # (.) has as many xi-derivatives as x-derivatives, so a
term of degree d decays like (<x><xi>)^(-d) relative to w.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import sympy
from sympy import QQ_I
from sympy.polys.rings import PolyElement, ring

from app.core.exceptions import InsufficientDerivOrder

logger = logging.getLogger(__name__)

AtomFn = Callable[[int, int], np.ndarray]


class SymbolAlgebra:
    def __init__(self, theta_max: int, sigma_max: int):
        self.theta_max = theta_max
        self.sigma_max = sigma_max
        self.atoms = [(t, s) for t in range(theta_max + 1) for s in range(sigma_max + 1) if (t, s) != (0, 0)]
        names = ["w"] + [f"a_{t}_{s}" for t, s in self.atoms]
        self.ring, *gens = ring(names, QQ_I)
        self.w = gens[0]
        self._gens = dict(zip(self.atoms, gens[1:]))

    def atom(self, theta: int, sigma: int) -> PolyElement:
        try:
            return self._gens[(theta, sigma)]
        except KeyError:
            raise InsufficientDerivOrder(
                f"derivative a_({theta},{sigma}) lies outside the algebra "
                f"(theta <= {self.theta_max}, sigma <= {self.sigma_max})"
            ) from None

    def constant(self, value) -> PolyElement:
        return self.ring.ground_new(QQ_I.from_sympy(sympy.sympify(value)))

    def _derive(self, P: PolyElement, step: tuple[int, int]) -> PolyElement:
        gens = self.ring.gens
        used = sorted({i for monom in P for i, e in enumerate(monom) if e})
        result = self.ring.zero
        for i in used:
            if i == 0:
                image = -(self.w**2) * self.atom(*step)
            else:
                theta, sigma = self.atoms[i - 1]
                image = self.atom(theta + step[0], sigma + step[1])
            result += P.diff(gens[i]) * image
        return result

    def dx(self, P: PolyElement, order: int = 1) -> PolyElement:
        for _ in range(order):
            P = self._derive(P, (1, 0))
        return P

    def dxi(self, P: PolyElement, order: int = 1) -> PolyElement:
        for _ in range(order):
            P = self._derive(P, (0, 1))
        return P

    def times_b(self, P: PolyElement) -> PolyElement:
        terms = {}
        for monom, coeff in P.items():
            if monom[0] == 0:
                raise ValueError("b * P needs every term of P to carry a factor w")
            terms[(monom[0] - 1,) + monom[1:]] = coeff
        return self.ring.from_dict(terms)

    def compose_with_b(self, P: PolyElement, order: int, max_degree: int | None = None) -> PolyElement:
        """b # P truncated at |alpha| <= order: b P + sum (-i)^alpha/alpha! a_(0,alpha) d_x^alpha P.

        With ``max_degree`` set, terms above that SG degree are dropped as they appear.
        """
        result = self.times_b(P)
        derivative = P
        for alpha in range(1, order + 1):
            derivative = self.dx(derivative)
            if max_degree is not None:
                derivative = self.prune(derivative, max_degree)
            if not derivative:
                break
            factor = self.constant((-sympy.I) ** alpha / math.factorial(alpha))
            result += factor * self.atom(0, alpha) * derivative
        return result

    def degree(self, monom: tuple[int, ...]) -> int:
        return sum(theta * e for (theta, _), e in zip(self.atoms, monom[1:]))

    def split_by_power(self, P: PolyElement) -> dict[int, PolyElement]:
        """{p: E_p} with P = sum_p E_p w^p and E_p free of w."""
        grouped: dict[int, dict] = {}
        for monom, coeff in P.items():
            grouped.setdefault(monom[0], {})[(0,) + monom[1:]] = coeff
        return {p: self.ring.from_dict(terms) for p, terms in sorted(grouped.items())}

    def split_by_degree(self, P: PolyElement) -> dict[int, PolyElement]:
        """{d: P_d} with P_d the part of P of SG degree d."""
        grouped: dict[int, dict] = {}
        for monom, coeff in P.items():
            grouped.setdefault(self.degree(monom), {})[monom] = coeff
        return {d: self.ring.from_dict(terms) for d, terms in sorted(grouped.items())}

    def prune(self, P: PolyElement, max_degree: int) -> PolyElement:
        return self.ring.from_dict({m: c for m, c in P.items() if self.degree(m) <= max_degree})

    def evaluate(self, P: PolyElement, atom: AtomFn, shape: tuple[int, ...], w: np.ndarray | None = None):
        out = np.zeros(shape, dtype=complex)
        for monom, coeff in sorted(P.items()):
            term = np.full(shape, complex(QQ_I.to_sympy(coeff)))
            if monom[0]:
                if w is None:
                    raise ValueError("polynomial depends on w but no w values were given")
                term = term * w ** monom[0]
            for (theta, sigma), e in zip(self.atoms, monom[1:]):
                if e:
                    term = term * atom(theta, sigma) ** e
            out += term
        return out

    def used_atoms(self, P: PolyElement) -> set[tuple[int, int]]:
        return {self.atoms[i - 1] for monom in P for i, e in enumerate(monom) if e and i > 0}


@dataclass(frozen=True)
class Correctors:
    algebra: SymbolAlgebra
    terms: tuple[PolyElement, ...]
    composition_order: int

    @property
    def total(self) -> PolyElement:
        return sum(self.terms[1:], self.terms[0])

    @property
    def term_count(self) -> int:
        """Number of A_j carried by the summed corrector (j = 0 .. term_count - 1)."""
        return max(monom[0] for monom in self.total.itermonoms())

    def coefficient(self, j: int) -> PolyElement:
        """A_j: the w-free factor of w^(j+1) in the summed corrector."""
        return self.algebra.split_by_power(self.total).get(j + 1, self.algebra.ring.zero)


@lru_cache(maxsize=8)
def build_correctors(J: int, order: int | None = None) -> Correctors:
    """c_0 = w and J further correctors, one per SG degree.

    With e_0 = b # c_0 - 1 (degrees >= 1), step k takes the degree-k part E_k of
    the error, sets c_k = -w E_k so that b c_k cancels it, and updates
    e_k = e_(k-1) + b # c_k; the remaining terms of b # c_k have degree above k.
    Terms of degree above J never reach a retained corrector and are dropped.
    A corrector of degree k spreads over several powers of w, so the summed
    corrector carries A_j up to j = 2J.
    """
    N = J + 1 if order is None else order
    algebra = SymbolAlgebra(theta_max=J + 2, sigma_max=max(N, J) + 2)
    correctors = [algebra.w]
    error = algebra.compose_with_b(algebra.w, N, max_degree=J) - 1
    for k in range(1, J + 1):
        part = algebra.split_by_degree(error).get(k, algebra.ring.zero)
        step = -part * algebra.w
        correctors.append(step)
        logger.debug(f"[SG] corrector {k}: degree {k}, {len(step)} terms")
        if k < J and step:
            error = error + algebra.compose_with_b(step, N, max_degree=J)
    return Correctors(algebra=algebra, terms=tuple(correctors), composition_order=N)
