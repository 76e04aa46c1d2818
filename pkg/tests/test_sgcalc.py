import numpy as np
import pytest

from app.core.exceptions import (
    HypothesisViolation,
    InsufficientDerivOrder,
    InvalidParams,
    ShapeMismatch,
    TruncationUnsupported,
    Unsupported,
)
from app.schemas.multiplier import GridSpec, StateField
from app.schemas.sgcalc import KernelExpansion, KernelKind, KernelTerm, PhaseGrid, SymbolField
from app.services.multiplier_service import apply_multiplier, evolve_full, evolve_hom, heat_symbol
from app.services.sgcalc_service import (
    admissible_lambda,
    assemble_kernels,
    build_symbol,
    check_hypotheses,
    compose_expand,
    corrector_seminorms,
    custom,
    kernel_decay_constant,
    kernel_expansion,
    multiplier_xi2,
    parametrix_residual,
    parametrix_terms,
    phase_grid,
    quantize,
    quantize_matrix,
    reference_var_hom,
    solve_var_full,
    solve_var_hom,
)
from app.utils.helpers import gaussian, relative_l2
from tests.conftest import mp_ml


def test_registry():
    assert build_symbol("multiplier_xi2", kappa=2.0).x_independent
    assert not build_symbol("poly_sg").x_independent
    with pytest.raises(InvalidParams):
        build_symbol("airy")


def test_symbol_orders_are_validated():
    with pytest.raises(InvalidParams):
        custom([1.0], [1.0, 0.0, 1.0], m_hypo=3.0)


def test_phase_grid_is_one_dimensional():
    with pytest.raises(Unsupported):
        PhaseGrid(GridSpec(dim=2, n=8, L=1.0))


def test_hypotheses_for_polynomial_symbol(poly_symbol, sg_grid):
    report = check_hypotheses(poly_symbol, sg_grid)
    assert report.clean
    assert report.h2_lower_margin >= 1.0 - 1e-12
    assert 1.9 <= report.h3_ratios["1,0"] <= 2.0


def test_pure_multiplier_fails_weighted_lower_bound(sg_grid):
    report = check_hypotheses(multiplier_xi2(m=2.0, m_hypo=2.0, mu_hypo=2.0), sg_grid)
    assert not report.clean
    assert report.h2_lower_margin <= 0.0
    assert all(label == "H2" for label, _, _ in report.failing_points)


def test_finite_difference_symbol_matches_exact(sg_grid, poly_symbol):
    approx = SymbolField.from_callable("fd", poly_symbol.eval, 2.0, 2.0, m_hypo=2.0, mu_hypo=2.0)
    np.testing.assert_allclose(
        sg_grid.derivative(approx, 1, 0), sg_grid.derivative(poly_symbol, 1, 0), rtol=1e-6, atol=1e-6
    )


def test_admissible_lambda(poly_symbol, sg_grid):
    assert admissible_lambda(poly_symbol, sg_grid, 0.5) == pytest.approx(10.0)


def test_composition_of_xi_and_x(sg_grid):
    p = custom([1.0], [0.0, 1.0])
    q = custom([0.0, 1.0], [1.0])
    composed = compose_expand(p, q, sg_grid, 1)
    np.testing.assert_allclose(composed, sg_grid.xi * sg_grid.x - 1j, atol=1e-12)


def test_quantize_x_independent_symbol_is_multiplier(bump):
    grid = PhaseGrid(bump.grid)
    symbol = grid.xi**2
    expected = apply_multiplier(bump, bump.grid.frequency_axis() ** 2)
    np.testing.assert_allclose(quantize(symbol, bump).values, expected.values, atol=1e-12)


def test_quantize_position_symbol_multiplies(bump):
    grid = PhaseGrid(bump.grid)
    np.testing.assert_allclose(quantize(grid.x, bump).values, grid.grid.axis() * bump.values, atol=1e-12)


def test_dense_matrix_matches_quantize(bump):
    grid = PhaseGrid(bump.grid)
    p = (1.0 + grid.x**2) * (1.0 + grid.xi**2)
    np.testing.assert_allclose(quantize_matrix(p) @ bump.values, quantize(p, bump).values, atol=1e-10)


def test_quantize_shape_mismatch(bump):
    with pytest.raises(ShapeMismatch):
        quantize(np.ones((4, 4)), bump)


def test_kernel_expansion_coefficients(poly_symbol, sg_grid):
    expansion = kernel_expansion(poly_symbol, sg_grid, 3, 0.5)
    np.testing.assert_allclose(expansion.coefficient(0), 1.0)
    assert np.max(np.abs(expansion.coefficient(1))) <= 1e-12
    assert [term.j for term in expansion.terms] == list(range(7))
    assert expansion.time_exponent(2, KernelKind.K1) == pytest.approx(0.5 * 2 + 0.5 - 1.0)


def test_truncation_cap(poly_symbol, sg_grid):
    with pytest.raises(TruncationUnsupported):
        kernel_expansion(poly_symbol, sg_grid, 4, 0.5)


def test_finite_difference_symbol_limits_order(poly_symbol, sg_grid):
    approx = SymbolField.from_callable("fd", poly_symbol.eval, 2.0, 2.0)
    with pytest.raises(InsufficientDerivOrder):
        kernel_expansion(approx, sg_grid, 3, 0.5)


def test_coefficients_do_not_depend_on_s(poly_symbol, sg_grid):
    low = parametrix_terms(poly_symbol, sg_grid, 3, 100.0, r=0.5)
    high = parametrix_terms(poly_symbol, sg_grid, 3, 1000.0, r=0.5)
    for j in range(len(low.expansion.terms)):
        np.testing.assert_allclose(low.expansion.coefficient(j), high.expansion.coefficient(j), rtol=1e-8)
    assert low.lam == pytest.approx(10.0)


def test_parametrix_needs_admissible_s(poly_symbol, sg_grid):
    with pytest.raises(InvalidParams):
        parametrix_terms(poly_symbol, sg_grid, 1, 5.0, r=0.5)


def test_residual_hierarchy(poly_symbol):
    # wave packet at (x, xi) = (6, 4), where each SG degree gains a factor <x><xi>
    grid = phase_grid(64, 16.0)
    phi = StateField(grid=grid.grid, values=gaussian(grid.grid, 2.0, center=6.0, wavenumber=4.0))
    residuals = [parametrix_residual(poly_symbol, grid, J, 100.0, phi, r=0.5) for J in range(4)]
    ratios = [b / a for a, b in zip(residuals, residuals[1:])]
    assert max(ratios) <= 0.5


def test_residual_decreases_for_centered_gaussian(poly_symbol):
    grid = phase_grid(64, 8.0)
    phi = StateField(grid=grid.grid, values=gaussian(grid.grid))
    residuals = [parametrix_residual(poly_symbol, grid, J, 100.0, phi, r=0.5) for J in range(4)]
    assert all(b < a for a, b in zip(residuals, residuals[1:]))


def test_residual_shrinks_with_s(poly_symbol, sg_grid):
    phi = lambda x: np.exp(-(x**2))  # noqa: E731
    values = [parametrix_residual(poly_symbol, sg_grid, 1, s, phi, r=0.5) for s in (10.0, 100.0, 1000.0)]
    assert values[0] >= values[1] >= values[2]


def test_seminorms_are_cumulative(poly_symbol, sg_grid):
    seminorms = corrector_seminorms(poly_symbol, sg_grid, 2, 100.0, 0.5)
    assert seminorms[0] <= seminorms[1] <= seminorms[2]


def test_kernels_at_time_zero(poly_symbol, sg_grid):
    K0, K1 = assemble_kernels(poly_symbol, sg_grid, 2, 0.5, 0.0)
    assert K1 is None
    np.testing.assert_allclose(K0, 1.0)


def test_kernel_decay_constant_is_finite(poly_symbol, sg_grid):
    assert np.isfinite(kernel_decay_constant(poly_symbol, sg_grid, 2, 0.5, [0.1, 1.0, 10.0]))


def test_collapse_to_multiplier_path():
    grid = GridSpec(dim=1, n=64, L=10.0)
    u0 = StateField(grid=grid, values=gaussian(grid))
    via_kernels = solve_var_hom(multiplier_xi2(), u0, 0.5, 1.0, 3)
    exact = evolve_hom(u0, heat_symbol(), 0.5, 1.0)
    assert relative_l2(via_kernels.values, exact.values) <= 1e-10


def test_negative_symbol_is_a_violation(bump):
    with pytest.raises(HypothesisViolation):
        solve_var_hom(custom([-1.0], [1.0]), bump, 0.5, 1.0, 1)


def test_full_solution_without_source_is_homogeneous(poly_symbol, bump):
    hom = solve_var_hom(poly_symbol, bump, 0.5, 0.5, 2)
    full = solve_var_full(poly_symbol, bump, None, 0.5, 0.5, 2)
    np.testing.assert_array_equal(full.values, hom.values)


def test_full_solution_with_constant_source_matches_multiplier_formula():
    grid = GridSpec(dim=1, n=32, L=8.0)
    u0 = StateField(grid=grid, values=gaussian(grid))
    source = gaussian(grid, 2.0)
    var = solve_var_full(multiplier_xi2(), u0, lambda _t: source, 0.7, 1.0, 2, quad_steps=128)
    const = evolve_full(u0, lambda _t: source, heat_symbol(), 0.7, 1.0, quad_steps=128)
    assert relative_l2(var.values, const.values) <= 1e-10


def test_higher_order_tracks_reference_on_small_grid(poly_symbol):
    grid = GridSpec(dim=1, n=64, L=16.0)
    u0 = StateField(grid=grid, values=gaussian(grid, 2.0, center=6.0, wavenumber=4.0))
    reference = reference_var_hom(poly_symbol, u0, 0.5, 1.0, 512)
    low, high = (relative_l2(solve_var_hom(poly_symbol, u0, 0.5, 1.0, J).values, reference.values) for J in (0, 3))
    assert high <= 5e-2 < low


@pytest.mark.slow
def test_variable_coefficients_against_reference(poly_symbol):
    grid = GridSpec(dim=1, n=128, L=16.0)
    u0 = StateField(grid=grid, values=gaussian(grid, 2.0, center=6.0, wavenumber=4.0))
    reference = reference_var_hom(poly_symbol, u0, 0.5, 1.0, 2048)
    errors = {J: relative_l2(solve_var_hom(poly_symbol, u0, 0.5, 1.0, J).values, reference.values) for J in (0, 1, 3)}
    assert errors[3] <= 5e-2
    assert errors[3] < errors[1] < errors[0]


@pytest.mark.slow
def test_higher_order_improves_centered_gaussian(poly_symbol):
    grid = GridSpec(dim=1, n=64, L=10.0)
    u0 = StateField(grid=grid, values=gaussian(grid))
    reference = reference_var_hom(poly_symbol, u0, 0.5, 1.0, 2048)
    errors = [relative_l2(solve_var_hom(poly_symbol, u0, 0.5, 1.0, J).values, reference.values) for J in (0, 3)]
    assert errors[1] < 0.6 * errors[0]


@pytest.mark.parametrize("J", [0, 1, 3])
def test_multiplier_parametrix_is_exact(sg_grid, J):
    phi = lambda x: np.exp(-(x**2))  # noqa: E731
    assert parametrix_residual(multiplier_xi2(), sg_grid, J, 100.0, phi, r=0.5) <= 1e-10


def test_kernel_decay_constant_value(poly_symbol, sg_grid):
    times = [0.1, 1.0, 10.0]
    assert kernel_decay_constant(poly_symbol, sg_grid, 0, 0.5, times) <= 1.0
    assert 0.9 <= kernel_decay_constant(poly_symbol, sg_grid, 2, 0.5, times) <= 2.0


def test_second_order_kernel_term(poly_symbol, sg_grid):
    r = 0.5
    A2 = kernel_expansion(poly_symbol, sg_grid, 2, r).coefficient(2)
    zero = np.zeros(sg_grid.shape, dtype=complex)
    only_a2 = KernelExpansion(r=r, J=2, terms=[KernelTerm(0, zero), KernelTerm(1, zero), KernelTerm(2, A2)])
    K0, _ = assemble_kernels(poly_symbol, sg_grid, 2, r, 1.0, expansion=only_a2)
    a = sg_grid.values(poly_symbol)
    points = np.argwhere(a <= 5.0)
    assert len(points) > 0
    for m, k in points:
        expected = 0.5 * A2[m, k] * mp_ml(r, 1.0, -a[m, k], 2)
        assert K0[m, k] == pytest.approx(expected, rel=1e-7, abs=1e-14)


def test_small_times_return_initial_data(poly_symbol):
    grid = GridSpec(dim=1, n=64, L=10.0)
    u0 = StateField(grid=grid, values=gaussian(grid))
    errors = [relative_l2(solve_var_hom(poly_symbol, u0, 0.5, t, 2).values, u0.values) for t in (0.1, 0.01, 0.001)]
    assert all(b < a for a, b in zip(errors, errors[1:]))
    assert errors[-1] <= 0.15
    assert errors[-1] <= 0.3 * errors[0]
