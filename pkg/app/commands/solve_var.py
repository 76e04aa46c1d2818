import logging
from pathlib import Path

import numpy as np

from app.schemas.experiment import CheckResult, ExperimentParams, RunReport
from app.schemas.multiplier import GridSpec, MultiplierSymbol, StateField
from app.schemas.sgcalc import SymbolField
from app.services.multiplier_service import evolve_hom
from app.services.sgcalc_service import build_symbol, reference_var_hom, solve_var_full, solve_var_hom
from app.utils.helpers import gaussian, relative_l2, write_field_csv, write_table_csv

logger = logging.getLogger(__name__)

REFERENCE_TOL = 5e-2
COLLAPSE_TOL = 1e-10
DEFAULT_J = 3


def symbol_for(params: ExperimentParams) -> SymbolField:
    name = params.symbol or "poly_sg"
    if name == "multiplier_xi2":
        return build_symbol(name, kappa=params.kappa)
    if name == "custom":
        return build_symbol(name, coef_x=params.coef_x, coef_xi=params.coef_xi)
    return build_symbol(name)


def as_multiplier(a: SymbolField) -> MultiplierSymbol:
    """The same symbol read as a Fourier multiplier; only meaningful when it ignores x."""
    return MultiplierSymbol(eval=lambda xi: a.eval(np.zeros_like(xi[0]), xi[0]), growth_tag=a.name)


def execute(params: ExperimentParams, out_dir: Path, report: RunReport, *, threads: int | None = None) -> None:
    grid = GridSpec(dim=1, n=params.n, L=params.L)
    a = symbol_for(params)
    J = DEFAULT_J if params.J is None else params.J
    r = params.r
    u0 = StateField(grid=grid, values=gaussian(grid, params.width, center=params.center, wavenumber=params.wavenumber))
    source = gaussian(grid, params.width) if params.source == "gaussian" else None
    f = None if source is None else (lambda _t: source)

    times = sorted(params.t)
    norms = []
    for index, t in enumerate(times):
        u = solve_var_full(a, u0, f, r, t, J, params.quad_steps, threads=threads)
        path = write_field_csv(out_dir / f"field_{index:03d}.csv", u)
        report.outputs.append(path.name)
        norms.append((t, u.l2_norm()))
    path = write_table_csv(out_dir / "norms.csv", ["t", "l2_norm"], norms)
    report.outputs.append(path.name)
    logger.info(f"[SG] {a.name} r={r} J={J}: {len(times)} snapshots on n={grid.n}")

    t_max = times[-1]
    if t_max <= 0:
        return
    parametrix = solve_var_hom(a, u0, r, t_max, J, threads=threads)
    reference = reference_var_hom(a, u0, r, t_max, params.steps)
    report.checks.append(
        CheckResult.at_most(
            "reference_agreement", relative_l2(parametrix.values, reference.values), params.tol or REFERENCE_TOL
        )
    )
    if a.x_independent:
        exact = evolve_hom(u0, as_multiplier(a), r, t_max, threads=threads)
        report.checks.append(
            CheckResult.at_most(
                "multiplier_collapse", relative_l2(parametrix.values, exact.values), params.rel_tol or COLLAPSE_TOL
            )
        )
