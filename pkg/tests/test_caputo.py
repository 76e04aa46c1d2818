import math

import numpy as np
import pytest

from app.core.exceptions import InvalidParams, LengthMismatch
from app.schemas.caputo import FodeProblem, FracGrid
from app.services.caputo_service import (
    correction_order,
    empirical_order,
    fode_closed_form,
    kernel_convolution,
    l1_apply,
    l1_final,
    power_kernel,
    product_weights,
    solve_modes,
    solve_operator_fode,
    solve_scalar_fode,
)
from tests.conftest import mp_ml


def test_l1_is_exact_for_linear_functions():
    grid = FracGrid(r=0.4, t_max=2.0, steps=64)
    t = grid.nodes
    derivative = l1_apply(grid, 3.0 * t + 1.0)
    np.testing.assert_allclose(derivative, 3.0 * t[1:] ** 0.6 / math.gamma(1.6), rtol=1e-12)


def test_l1_final_matches_last_row():
    grid = FracGrid(r=0.7, t_max=1.0, steps=50)
    y = np.stack([np.sin(grid.nodes), np.cos(grid.nodes)], axis=1)
    np.testing.assert_allclose(l1_final(grid, y), l1_apply(grid, y)[-1], rtol=1e-13)


def test_l1_length_mismatch():
    with pytest.raises(LengthMismatch):
        l1_apply(FracGrid(r=0.5, t_max=1.0, steps=10), np.zeros(5))


def test_correction_order():
    assert correction_order(0.5) == 3
    assert correction_order(0.8) == 2
    assert correction_order(0.3) == 6


def test_relaxation_against_mittag_leffler():
    p = FodeProblem(r=0.5, lam=1.0, y0=1.0)
    grid = FracGrid(r=0.5, t_max=1.0, steps=1024)
    y = solve_scalar_fode(p, grid)
    assert y[-1] == pytest.approx(mp_ml(0.5, 1.0, -1.0), rel=1e-4)


def test_constant_source_against_closed_form():
    p = FodeProblem(r=0.6, lam=2.0, y0=0.5, g=lambda t: np.ones_like(t))
    grid = FracGrid(r=0.6, t_max=1.0, steps=1024)
    y = solve_scalar_fode(p, grid)
    assert y[-1] == pytest.approx(float(fode_closed_form(p, [1.0])[0]), rel=1e-4)


@pytest.mark.slow
@pytest.mark.parametrize("r", [0.3, 0.5, 0.8])
def test_empirical_order(r):
    p = FodeProblem(r=r, lam=1.0, y0=1.0)
    order = empirical_order(p, [256, 512, 1024, 2048])
    assert abs(order - (2.0 - r)) <= 0.15


def test_empirical_order_needs_increasing_steps():
    with pytest.raises(InvalidParams):
        empirical_order(FodeProblem(r=0.5, lam=1.0, y0=1.0), [64, 32, 128])


def test_modes_are_independent_of_threading():
    grid = FracGrid(r=0.5, t_max=1.0, steps=200)
    lambdas = np.linspace(0.0, 30.0, 17)
    single = solve_modes(lambdas, 1.0, grid, threads=1)
    np.testing.assert_allclose(single, solve_modes(lambdas, 1.0, grid, threads=4), rtol=1e-13, atol=1e-15)
    assert single.shape == (201, 17)


def test_zero_rate_mode_stays_constant():
    grid = FracGrid(r=0.5, t_max=1.0, steps=64)
    np.testing.assert_allclose(solve_modes([0.0], 2.5, grid)[:, 0], 2.5, rtol=1e-13)


def test_step_cap():
    with pytest.raises(InvalidParams):
        solve_modes([1.0], 1.0, FracGrid(r=0.5, t_max=1.0, steps=2**15))


def test_operator_stepping_matches_diagonal_modes():
    grid = FracGrid(r=0.4, t_max=1.0, steps=128)
    lambdas = np.array([0.5, 2.0, 7.0])
    u0 = np.array([1.0, -0.5, 2.0])
    dense = solve_operator_fode(np.diag(lambdas), u0, grid)
    modes = solve_modes(lambdas, u0, grid, correction_terms=0)
    np.testing.assert_allclose(dense, modes, rtol=1e-12, atol=1e-14)


def test_operator_shape_mismatch():
    with pytest.raises(LengthMismatch):
        solve_operator_fode(np.eye(3), np.ones(4), FracGrid(r=0.5, t_max=1.0, steps=8))


def test_product_weights_integrate_linear_functions():
    w = product_weights(0.4, 10)
    k = np.arange(11)
    assert w.sum() == pytest.approx(10**0.4 / 0.4, rel=1e-13)
    assert np.dot(w, k) == pytest.approx(10**1.4 / 1.4, rel=1e-13)


def test_kernel_semigroup():
    grid = FracGrid(r=0.5, t_max=2.0, steps=8)
    convolved = kernel_convolution(0.3, 0.5, grid)
    np.testing.assert_allclose(convolved, power_kernel(0.8, grid.nodes[1:]), rtol=1e-4)


@pytest.mark.parametrize("r", [0.3, 0.5, 0.8])
@pytest.mark.parametrize("lam", [0.5, 1.0, 2.0, 4.0, 8.0])
def test_singular_part_subtraction_never_hurts(r, lam):
    grid = FracGrid(r=r, t_max=1.0, steps=1024)
    exact = mp_ml(r, 1.0, -lam)
    corrected = solve_modes([lam], 1.0, grid)[-1, 0]
    plain = solve_modes([lam], 1.0, grid, correction_terms=0)[-1, 0]
    assert abs(corrected - exact) <= abs(plain - exact)


def test_subtraction_skipped_when_series_cancels():
    grid = FracGrid(r=0.3, t_max=1.0, steps=2048)
    corrected = solve_modes([5.0, 7.9], 1.0, grid)[-1]
    plain = solve_modes([5.0, 7.9], 1.0, grid, correction_terms=0)[-1]
    np.testing.assert_array_equal(corrected, plain)


@pytest.mark.parametrize("r", [0.3, 0.5, 0.8])
def test_weights_telescope(r):
    grid = FracGrid(r=r, t_max=1.0, steps=512)
    n = np.arange(1, grid.steps + 1)
    np.testing.assert_allclose(np.cumsum(grid.weights), n ** (1.0 - r), rtol=1e-12)


@pytest.mark.parametrize("r", [0.3, 0.5, 0.8])
def test_relaxation_is_positive_and_monotone(r):
    grid = FracGrid(r=r, t_max=2.0, steps=256)
    y = solve_modes([0.5, 5.0, 50.0], 1.0, grid, correction_terms=0)
    assert np.all(y > 0)
    assert np.all(np.diff(y, axis=0) <= 0)


@pytest.mark.parametrize("alpha, beta", [(0.3, 0.5), (0.5, 0.5), (0.7, 0.9)])
def test_kernel_semigroup_on_a_fine_grid(alpha, beta):
    grid = FracGrid(r=0.5, t_max=4.0, steps=256)
    convolved = kernel_convolution(alpha, beta, grid)
    np.testing.assert_allclose(convolved, power_kernel(alpha + beta, grid.nodes[1:]), rtol=1e-4)
