import math

import numpy as np
import pytest

from app.core.exceptions import QuadratureFailure
from app.services.quadrature_service import adaptive_gauss_legendre, gauss_legendre_rule, graded_laplace_rule


def test_rule_is_exact_for_polynomials():
    nodes, weights = gauss_legendre_rule(5)
    assert np.dot(weights, nodes**8) == pytest.approx(2.0 / 9.0, rel=1e-14)
    assert not weights.flags.writeable


def test_adaptive_handles_endpoint_singularity():
    result = adaptive_gauss_legendre(np.sqrt, 0.0, 1.0, rel_tol=1e-12)
    assert result.value == pytest.approx(2.0 / 3.0, rel=1e-11)
    assert result.intervals > 1


def test_adaptive_integrates_components_together():
    result = adaptive_gauss_legendre(lambda x: np.stack([x, x**2, np.cos(x)], axis=-1), 0.0, 1.0)
    np.testing.assert_allclose(result.value, [0.5, 1.0 / 3.0, math.sin(1.0)], rtol=1e-12)


def test_adaptive_reports_exhaustion():
    with pytest.raises(QuadratureFailure):
        adaptive_gauss_legendre(lambda x: np.abs(x - 0.3) ** -0.5, 0.0, 1.0, rel_tol=1e-15, max_intervals=2)


def test_graded_rule_absorbs_inverse_square_root():
    u, w = graded_laplace_rule(2.0)
    value = np.dot(w, u**-0.5 * np.exp(-u))
    assert value == pytest.approx(math.sqrt(math.pi), rel=1e-10)
