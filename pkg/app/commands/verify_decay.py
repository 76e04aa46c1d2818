"""Decay envelope exponents, the large-argument law and the complete-monotonicity signs."""

import logging
from pathlib import Path

import numpy as np
from scipy.special import gamma

from app.schemas.experiment import CheckResult, ExperimentParams, RunReport
from app.schemas.mlf import MLParams, MLPoint
from app.services.mlf_service import ml_decay_bound, ml_eval, ml_eval_array
from app.utils.helpers import write_table_csv

logger = logging.getLogger(__name__)

SLOPE_TOL = 0.05
LAW_TOL = 0.02
LAW_POINT = 1e4
MONOTONE_DERIVS = 3
# sign tests tolerate round-off around zero
SIGN_FLOOR = -1e-14


def _decay(params: ExperimentParams, out_dir: Path, report: RunReport, threads: int | None = None) -> None:
    p = MLParams(alpha=params.alpha, beta=params.beta)
    z = -np.geomspace(1e2, 1e6, 25)
    values = ml_eval_array(p, z, threads=threads)
    envelope = np.array([ml_decay_bound(p, 0, float(v)) for v in z])
    slope = float(np.polyfit(np.log(-z), np.log(np.abs(values)), 1)[0])
    expected = -2.0 if p.alpha == p.beta else -1.0
    logger.info(f"[MLF] decay slope {slope:.4f} (expected {expected}) for alpha={p.alpha}, beta={p.beta}")

    path = write_table_csv(
        out_dir / "decay.csv", ["z", "value", "envelope", "ratio"], zip(z, values, envelope, values / envelope)
    )
    report.outputs.append(path.name)
    report.checks.append(CheckResult.at_most("decay_slope", abs(slope - expected), params.tol or SLOPE_TOL))


def _asymptotic_law(params: ExperimentParams, out_dir: Path, report: RunReport) -> None:
    rows = []
    for r in params.r_list:
        value = ml_eval(MLPoint(params=MLParams(alpha=r, beta=1.0), z=-LAW_POINT)).value
        scaled = value * gamma(1.0 - r) * LAW_POINT
        rows.append((r, LAW_POINT, value, scaled))
    path = write_table_csv(out_dir / "asymptotic.csv", ["r", "x", "value", "scaled"], rows)
    report.outputs.append(path.name)
    worst = max(abs(row[3] - 1.0) for row in rows)
    report.checks.append(CheckResult.at_most("asymptotic_law", worst, params.rel_tol or LAW_TOL))


def _monotonicity(params: ExperimentParams, out_dir: Path, report: RunReport) -> None:
    """d^k/dz^k E_{r,1} at z = -x is non-negative for every k, which is complete monotonicity of E_{r,1}(-x)."""
    rows = []
    for r in params.r_list:
        p = MLParams(alpha=r, beta=1.0)
        for x in np.geomspace(0.01, 1e3, 30):
            for k in range(MONOTONE_DERIVS + 1):
                rows.append((r, x, k, ml_eval(MLPoint(params=p, z=-float(x), deriv_order=k)).value))
    path = write_table_csv(out_dir / "monotonicity.csv", ["r", "x", "k", "derivative"], rows)
    report.outputs.append(path.name)

    lowest = min(row[3] for row in rows)
    bounded = all(row[3] <= 1.0 for row in rows if row[2] == 0)
    report.checks.append(CheckResult.at_least("complete_monotonicity", lowest, SIGN_FLOOR))
    report.checks.append(CheckResult.holds("relaxation_below_one", bounded))


def execute(params: ExperimentParams, out_dir: Path, report: RunReport, *, threads: int | None = None) -> None:
    _decay(params, out_dir, report, threads)
    _asymptotic_law(params, out_dir, report)
    _monotonicity(params, out_dir, report)
