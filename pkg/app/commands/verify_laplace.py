"""Transform-pair closure, Watson-lemma ratios and forward/inverse round trip."""

import logging
from pathlib import Path

import numpy as np
from scipy.special import gamma

from app.schemas.experiment import CheckResult, ExperimentParams, RunReport
from app.schemas.laplace import TalbotConfig
from app.schemas.mlf import MLParams
from app.services.laplace_service import (
    ml_pair_transform,
    sample_transform,
    talbot_invert_many,
    verify_ml_pair,
    watson_ratio_infinity,
    watson_ratio_origin,
)
from app.services.mlf_service import ml_eval_array
from app.utils.helpers import write_table_csv

logger = logging.getLogger(__name__)

PAIR_TOL = 1e-6
WATSON_TOL = 0.05
ROUND_TRIP_TOL = 1e-6
WATSON_S_LARGE = 1e6
WATSON_S_SMALL = 1e-6
ROUND_TRIP_S = (0.5, 1.0, 2.0)


def _psi(p: MLParams, mu: float, threads: int | None = None):
    """t^(beta-1) E_{alpha,beta}(mu t^alpha), whose transform is the j = 0 pair."""

    def psi(t):
        t = np.asarray(t, dtype=float)
        return t ** (p.beta - 1.0) * ml_eval_array(p, mu * t**p.alpha, threads=threads)

    return psi


def _watson_checks(p: MLParams, mu: float, report: RunReport, threads: int | None = None) -> list[tuple]:
    rows = []
    psi = _psi(p, mu, threads)
    if p.beta > 0:
        ratio = watson_ratio_origin(psi, 1.0 / gamma(p.beta), p.beta - 1.0, WATSON_S_LARGE)
        rows.append(("origin", WATSON_S_LARGE, ratio))
        report.checks.append(CheckResult.at_most("watson_origin", abs(ratio - 1.0), WATSON_TOL))
    else:
        logger.info(f"[LAPLACE] origin ratio skipped: beta={p.beta} gives no t^(beta-1) leading term")

    # beta - alpha at a non-positive integer kills the leading term at infinity
    shift = p.beta - p.alpha
    if mu < 0 and p.integral_ok and not (shift <= 0 and float(shift).is_integer()):
        B = 1.0 / (abs(mu) * gamma(shift))
        ratio = watson_ratio_infinity(
            psi, B, shift - 1.0, WATSON_S_SMALL, endpoint_sigma=min(p.beta - 1.0, 0.0)
        )
        rows.append(("infinity", WATSON_S_SMALL, ratio))
        report.checks.append(CheckResult.at_most("watson_infinity", abs(ratio - 1.0), WATSON_TOL))
    else:
        logger.info(f"[LAPLACE] infinity ratio skipped for alpha={p.alpha}, beta={p.beta}, mu={mu}")
    return rows


def _round_trip(p: MLParams, mu: float, j: int, cfg: TalbotConfig) -> list[tuple]:
    F = ml_pair_transform(p, mu, j)
    sigma = min(j * p.alpha + p.beta - 1.0, 0.0)
    sample = sample_transform(lambda t: talbot_invert_many(F, t, cfg), ROUND_TRIP_S, 40.0, sigma=sigma)
    exact = F(np.array(sample.s_values))
    return [
        (s.real, got.real, want.real, abs(got - want) / abs(want))
        for s, got, want in zip(sample.s_values, sample.f_hat, exact)
    ]


def execute(params: ExperimentParams, out_dir: Path, report: RunReport, *, threads: int | None = None) -> None:
    p = MLParams(alpha=params.alpha, beta=params.beta)
    cfg = TalbotConfig(node_count=params.node_count, contour=params.contour)
    t_grid = params.t or np.geomspace(0.1, 10.0, 25)

    pair = verify_ml_pair(p, params.mu, params.j, t_grid, cfg)
    errors = [abs(a - b) / abs(a) if a else abs(b) for a, b in zip(pair.time_side, pair.s_side)]
    path = write_table_csv(
        out_dir / "laplace_pair.csv",
        ["t", "time_side", "talbot", "rel_error"],
        zip(pair.t_grid, pair.time_side, pair.s_side, errors),
    )
    report.outputs.append(path.name)
    report.checks.append(CheckResult.at_most("ml_laplace_pair", pair.max_rel_error, params.tol or PAIR_TOL))

    watson = _watson_checks(p, params.mu, report, threads)
    path = write_table_csv(out_dir / "watson.csv", ["end", "s", "ratio"], watson)
    report.outputs.append(path.name)

    trip = _round_trip(p, params.mu, params.j, cfg)
    path = write_table_csv(out_dir / "round_trip.csv", ["s", "forward_of_inverse", "exact", "rel_error"], trip)
    report.outputs.append(path.name)
    worst = max(row[3] for row in trip)
    report.checks.append(CheckResult.at_most("laplace_round_trip", worst, params.rel_tol or ROUND_TRIP_TOL))
