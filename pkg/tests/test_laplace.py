import math

import numpy as np
import pytest
from pydantic import ValidationError as SchemaError

from app.core.exceptions import ContourFailure, InvalidParams, TailNotNegligible
from app.schemas.laplace import TalbotConfig, TransformSample
from app.schemas.mlf import MLParams
from app.services.mlf_service import ml_eval_array
from app.services.laplace_service import (
    forward_laplace,
    sample_transform,
    talbot_invert,
    talbot_invert_many,
    verify_ml_pair,
    watson_ratio_infinity,
    watson_ratio_origin,
)


def test_forward_exponential():
    estimate = forward_laplace(lambda t: np.exp(-t), 1.0, 40.0)
    assert estimate.value.real == pytest.approx(0.5, rel=1e-10)
    assert estimate.value.imag == pytest.approx(0.0, abs=1e-14)


def test_forward_graded_for_singular_origin():
    estimate = forward_laplace(lambda t: t**-0.5, 2.0, 30.0, sigma=-0.5)
    assert estimate.value.real == pytest.approx(math.sqrt(math.pi / 2.0), rel=1e-9)


def test_forward_rejects_heavy_tail():
    with pytest.raises(TailNotNegligible):
        forward_laplace(lambda t: np.ones_like(t), 0.01, 1.0)


def test_forward_checks_the_whole_tail_window():
    # vanishes at T but not just beyond it
    def burst(t):
        return 1e8 * np.maximum(t - 10.0, 0.0) ** 2

    with pytest.raises(TailNotNegligible):
        forward_laplace(burst, 1.0, 10.0)


def test_forward_needs_positive_real_part():
    with pytest.raises(InvalidParams):
        forward_laplace(lambda t: np.exp(-t), -1.0 + 2.0j, 10.0)


@pytest.mark.parametrize("t", [0.1, 1.0, 5.0])
def test_talbot_recovers_exponential(t):
    assert talbot_invert(lambda s: 1.0 / (s + 1.0), t) == pytest.approx(math.exp(-t), rel=1e-10)


def test_talbot_classical_contour():
    cfg = TalbotConfig(node_count=32, contour="classical")
    assert talbot_invert(lambda s: 1.0 / s**2, 2.0, cfg) == pytest.approx(2.0, rel=1e-6)


def test_talbot_many_keeps_shape():
    times = np.array([[0.5, 1.0], [2.0, 4.0]])
    values = talbot_invert_many(lambda s: 1.0 / s**2, times)
    np.testing.assert_allclose(values, times, rtol=1e-10)


def test_talbot_flags_non_finite_transform():
    with pytest.raises(ContourFailure):
        talbot_invert(lambda s: np.full(s.shape, np.nan), 1.0)


def test_talbot_needs_positive_time():
    with pytest.raises(InvalidParams):
        talbot_invert(lambda s: 1.0 / s, 0.0)


@pytest.mark.parametrize(
    "alpha, beta, j", [(0.3, 1.0, 0), (0.5, 1.0, 0), (0.8, 1.0, 0), (0.5, 0.5, 0), (0.5, 1.0, 1)]
)
def test_mittag_leffler_pair(alpha, beta, j):
    report = verify_ml_pair(MLParams(alpha=alpha, beta=beta), -1.0, j, np.geomspace(0.1, 10.0, 12))
    assert report.max_rel_error <= 1e-6
    assert len(report.s_side) == 12


def test_pair_rejects_positive_mu():
    with pytest.raises(InvalidParams):
        verify_ml_pair(MLParams(alpha=0.5, beta=1.0), 1.0, 0, [1.0])


def test_watson_ratio_at_origin():
    ratio = watson_ratio_origin(lambda t: t**-0.5 * np.exp(-t), 1.0, -0.5, 1e4)
    assert ratio == pytest.approx(math.sqrt(1e4 / (1e4 + 1.0)), rel=1e-8)


def test_watson_ratio_at_infinity():
    ratio = watson_ratio_infinity(lambda t: (1.0 + t) ** -0.5, 1.0, -0.5, 1e-6)
    assert ratio == pytest.approx(1.0, abs=5e-3)


@pytest.mark.slow
def test_forward_of_inverse_round_trip():
    F = lambda s: 1.0 / (s + 1.0)  # noqa: E731
    estimate = forward_laplace(lambda t: talbot_invert_many(F, t), 2.0, 20.0)
    assert estimate.value.real == pytest.approx(1.0 / 3.0, rel=1e-8)


def test_forward_constant_one():
    estimate = forward_laplace(lambda t: np.ones_like(t), 2.0, 40.0)
    assert estimate.value.real == pytest.approx(0.5, rel=1e-10)


def test_forward_inverse_sqrt_kernel():
    estimate = forward_laplace(lambda t: t**-0.5 / math.gamma(0.5), 1.0, 60.0, sigma=-0.5)
    assert estimate.value.real == pytest.approx(1.0, rel=1e-8)


def test_forward_of_relaxation():
    p = MLParams(alpha=0.5, beta=1.0)
    s = 1.7
    estimate = forward_laplace(lambda t: ml_eval_array(p, -np.sqrt(t)), s, 80.0)
    assert estimate.value.real == pytest.approx(s**-0.5 / (s**0.5 + 1.0), rel=1e-7)


def test_talbot_ramp_at_three():
    assert talbot_invert(lambda s: 1.0 / s**2, 3.0) == pytest.approx(3.0, rel=1e-8)


def test_sample_transform_nodes():
    sample = sample_transform(lambda t: np.exp(-t), [0.5, 1.0, 2.0], 40.0)
    assert isinstance(sample, TransformSample)
    assert [s.real for s in sample.s_values] == [0.5, 1.0, 2.0]
    for s, value in zip(sample.s_values, sample.f_hat):
        assert value.real == pytest.approx(1.0 / (s.real + 1.0), rel=1e-9)


@pytest.mark.parametrize(
    "s_values, f_hat",
    [
        ([1.0, 2.0], [0.5]),
        ([0.0], [1.0]),
        ([complex(-1.0, 3.0)], [1.0]),
    ],
)
def test_transform_sample_rejects(s_values, f_hat):
    with pytest.raises(SchemaError):
        TransformSample(s_values=s_values, f_hat=f_hat)
