import numpy as np
import pytest
import sympy

from app.core.exceptions import InsufficientDerivOrder
from app.services.parametrix_service import SymbolAlgebra, build_correctors
from app.services.sgcalc_service import poly_sg


def test_derivation_rules():
    alg = SymbolAlgebra(3, 3)
    assert alg.dx(alg.w) == -(alg.w**2) * alg.atom(1, 0)
    assert alg.dxi(alg.atom(1, 0)) == alg.atom(1, 1)
    assert alg.dx(alg.w, 2) == 2 * alg.w**3 * alg.atom(1, 0) ** 2 - alg.w**2 * alg.atom(2, 0)


def test_multiplication_by_b_lowers_power():
    alg = SymbolAlgebra(2, 2)
    assert alg.times_b(alg.w) == alg.ring.one
    with pytest.raises(ValueError):
        alg.times_b(alg.atom(1, 0))


def test_first_order_composition():
    alg = SymbolAlgebra(2, 2)
    expected = alg.ring.one + alg.constant(sympy.I) * alg.atom(0, 1) * alg.atom(1, 0) * alg.w**2
    assert alg.compose_with_b(alg.w, 1) == expected


def test_atoms_outside_algebra():
    with pytest.raises(InsufficientDerivOrder):
        SymbolAlgebra(2, 2).atom(3, 0)


def test_first_corrector():
    system = build_correctors(1)
    alg = system.algebra
    expected = -alg.constant(sympy.I) * alg.atom(0, 1) * alg.atom(1, 0) * alg.w**3
    assert system.terms[1] == expected
    assert system.composition_order == 2


def test_second_corrector_carries_the_rest_of_a2():
    system = build_correctors(2)
    alg = system.algebra
    half = alg.constant(sympy.Rational(1, 2))
    assert alg.split_by_power(system.terms[2])[3] == -half * alg.atom(0, 2) * alg.atom(2, 0)


@pytest.mark.parametrize("J", [1, 2, 3])
def test_each_corrector_has_one_degree(J):
    system = build_correctors(J)
    for k, term in enumerate(system.terms[1:], start=1):
        assert set(system.algebra.split_by_degree(term)) == {k}


@pytest.mark.parametrize("J", [0, 1, 2, 3])
def test_error_starts_above_truncation_degree(J):
    system = build_correctors(J)
    alg = system.algebra
    error = alg.compose_with_b(system.total, system.composition_order, max_degree=J) - 1
    assert alg.prune(error, J) == alg.ring.zero


@pytest.mark.parametrize("J", [0, 1, 2, 3])
def test_term_count_reaches_twice_the_order(J):
    assert build_correctors(J).term_count == 2 * J + 1


def test_leading_coefficients():
    system = build_correctors(3)
    assert system.coefficient(0) == system.algebra.ring.one
    assert not system.coefficient(1)
    assert len(system.terms) == 4


def test_second_coefficient_at_a_point():
    a = poly_sg()
    system = build_correctors(2)

    def atom(theta, sigma):
        return np.array([a.deriv(theta, sigma, 1.0, 1.0)])

    value = system.algebra.evaluate(system.coefficient(2), atom, (1,))
    assert value[0] == pytest.approx(-8.0 - 16.0j, abs=1e-12)


def test_used_atoms():
    alg = SymbolAlgebra(2, 2)
    assert alg.used_atoms(alg.dx(alg.w)) == {(1, 0)}


def test_split_and_prune():
    alg = SymbolAlgebra(2, 1)
    P = alg.w + 3 * alg.w**2 * alg.atom(1, 0) + alg.w**4 * alg.atom(2, 1) * alg.atom(1, 0)
    parts = alg.split_by_power(P)
    assert sorted(parts) == [1, 2, 4]
    assert parts[2] == 3 * alg.atom(1, 0)
    assert sorted(alg.split_by_degree(P)) == [0, 1, 3]
    assert alg.prune(P, 1) == alg.w + 3 * alg.w**2 * alg.atom(1, 0)
