import logging
from pathlib import Path

import numpy as np

from app.commands.solve_var import symbol_for
from app.schemas.experiment import CheckResult, ExperimentParams, RunReport
from app.schemas.multiplier import StateField
from app.services.sgcalc_service import (
    admissible_lambda,
    check_hypotheses,
    corrector_seminorms,
    kernel_expansion,
    parametrix_residual,
    parametrix_terms,
    phase_grid,
)
from app.utils.helpers import gaussian, write_table_csv

logger = logging.getLogger(__name__)

RATIO_MAX = 0.5
A1_TOL = 1e-12
S_INDEPENDENCE_TOL = 1e-8
DEFAULT_S = (100.0, 1000.0)
MAX_J = 3


def execute(params: ExperimentParams, out_dir: Path, report: RunReport, *, threads: int | None = None) -> None:
    grid = phase_grid(params.n, params.L)
    a = symbol_for(params)
    r = params.r
    J_max = MAX_J if params.J is None else params.J
    s_values = sorted(params.s or DEFAULT_S)
    phi = StateField(
        grid=grid.grid,
        values=gaussian(grid.grid, params.width, center=params.center, wavenumber=params.wavenumber),
    )
    lam = admissible_lambda(a, grid, r)

    hypo = check_hypotheses(a, grid)
    rows = [("h1_ratio_max", hypo.h1_ratio_max), ("h2_lower_margin", hypo.h2_lower_margin)]
    rows += [("h3_ratio_max", hypo.h3_ratio_max), ("failing_count", hypo.failing_count), ("lambda", lam)]
    report.outputs.append(write_table_csv(out_dir / "hypotheses.csv", ["quantity", "value"], rows).name)

    s0 = s_values[0]
    residuals = [(J, s0, parametrix_residual(a, grid, J, s0, phi, r=r)) for J in range(J_max + 1)]
    if J_max >= 1:
        residuals += [(1, s, parametrix_residual(a, grid, 1, s, phi, r=r)) for s in (lam, 10 * lam, 100 * lam)]
    report.outputs.append(write_table_csv(out_dir / "residuals.csv", ["J", "s", "residual"], residuals).name)

    hierarchy = [res for _, _, res in residuals[: J_max + 1]]
    if len(hierarchy) > 1:
        worst = max(nxt / prev for prev, nxt in zip(hierarchy, hierarchy[1:]))
        report.checks.append(CheckResult.at_most("residual_ratio", worst, RATIO_MAX))
    if J_max >= 1:
        in_s = [res for _, _, res in residuals[J_max + 1 :]]
        report.checks.append(
            CheckResult.holds("residual_nonincreasing_in_s", all(nxt <= prev for prev, nxt in zip(in_s, in_s[1:])))
        )

    expansion = kernel_expansion(a, grid, J_max, r)
    coefficient_rows = []
    for term in expansion.terms:
        for x, xi, value in zip(grid.x.ravel(), grid.xi.ravel(), term.A.ravel()):
            coefficient_rows.append((term.j, x, xi, value.real, value.imag))
    path = write_table_csv(out_dir / "coefficients.csv", ["j", "x", "xi", "re", "im"], coefficient_rows)
    report.outputs.append(path.name)
    if J_max >= 1:
        report.checks.append(
            CheckResult.at_most("a1_vanishes", float(np.max(np.abs(expansion.coefficient(1)))), params.tol or A1_TOL)
        )

    if len(s_values) > 1:
        low = parametrix_terms(a, grid, J_max, s_values[0], r=r).expansion
        high = parametrix_terms(a, grid, J_max, s_values[-1], r=r).expansion
        drift = 0.0
        for j in range(len(low.terms)):
            scale = max(float(np.max(np.abs(low.coefficient(j)))), 1.0)
            drift = max(drift, float(np.max(np.abs(low.coefficient(j) - high.coefficient(j)))) / scale)
        report.checks.append(CheckResult.at_most("s_independence", drift, params.rel_tol or S_INDEPENDENCE_TOL))

    seminorm_rows = []
    for s in s_values:
        for k, value in corrector_seminorms(a, grid, J_max, s, r).items():
            seminorm_rows.append((s, k, value))
    report.outputs.append(write_table_csv(out_dir / "seminorms.csv", ["s", "k", "seminorm"], seminorm_rows).name)
    logger.info(f"[SG] parametrix report for {a.name}: J <= {J_max}, s in {s_values}, lambda={lam:.4g}")
