import logging
from pathlib import Path

import numpy as np

from app.core.config import settings
from app.schemas.experiment import CheckResult, ExperimentParams, RunReport
from app.schemas.mlf import MLParams, MLPoint
from app.services.mlf_service import ml_eval
from app.utils.helpers import write_table_csv

logger = logging.getLogger(__name__)


def sample_points(params: ExperimentParams) -> np.ndarray:
    if params.z is not None:
        return np.asarray(params.z, dtype=float)
    return np.linspace(params.z_min, params.z_max, params.z_count)


def execute(params: ExperimentParams, out_dir: Path, report: RunReport, *, threads: int | None = None) -> None:
    p = MLParams(alpha=params.alpha, beta=params.beta)
    rows = []
    for z in sample_points(params):
        result = ml_eval(MLPoint(params=p, z=float(z), deriv_order=params.j))
        rows.append((float(z), result.value, result.branch.value, result.est_rel_error))
    path = write_table_csv(out_dir / "mlf.csv", ["z", "value", "branch", "est_rel_error"], rows)
    report.outputs.append(path.name)
    logger.info(f"[MLF] evaluated E^({params.j})_{{{p.alpha},{p.beta}}} at {len(rows)} points")

    threshold = params.tol or settings.ML_INTEGRAL_TOL
    report.checks.append(CheckResult.at_most("ml_est_rel_error", max(row[3] for row in rows), threshold))
