import logging
from pathlib import Path

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import gamma

from app.core.exceptions import InvalidParams
from app.schemas.experiment import CheckResult, ExperimentParams, RunReport
from app.schemas.mlf import MLParams
from app.schemas.multiplier import GridSpec, MultiplierSymbol, StateField
from app.services.mlf_service import ml_eval_array
from app.services.multiplier_service import (
    LEAKAGE_WARN,
    evolve_full,
    evolve_hom,
    evolve_hom_l1,
    heat_symbol,
    symbol_values,
)
from app.utils.helpers import gaussian, relative_l2, write_field_csv, write_table_csv

logger = logging.getLogger(__name__)

L1_ORACLE_TOL = 1e-3
DUHAMEL_TOL = 1e-3


def multiplier_for(params: ExperimentParams) -> MultiplierSymbol:
    if params.symbol in (None, "multiplier_xi2"):
        return heat_symbol(params.kappa)
    if params.symbol == "custom":
        scale = np.trim_zeros(np.asarray(params.coef_x, dtype=float), "b")
        if scale.size > 1:
            raise InvalidParams("custom symbol depends on x; use solve-var")
        factor = float(scale[0]) if scale.size else 0.0
        coef_xi = np.asarray(params.coef_xi, dtype=float)
        # q(|xi|) on every axis sum, matching kappa |xi|^2 for coef_xi = [0, 0, kappa]
        return MultiplierSymbol(
            eval=lambda xi: factor * P.polyval(np.sqrt(np.sum(xi**2, axis=0)), coef_xi),
            growth_tag=f"custom{coef_xi.tolist()}",
        )
    raise InvalidParams(f"symbol {params.symbol!r} is not a Fourier multiplier")


def forced_closed_form(
    source: np.ndarray, a: MultiplierSymbol, grid: GridSpec, r: float, t: float, *, threads: int | None = None
) -> np.ndarray:
    """Duhamel term of a time-constant source: (1 - E_{r,1}(-t^r a)) / a per mode, t^r/Gamma(1+r) where a = 0."""
    a_vals = symbol_values(a, grid)
    relaxed = ml_eval_array(MLParams(alpha=r, beta=1.0), -(t**r) * a_vals, threads=threads)
    at_zero = t**r / gamma(1.0 + r)
    safe = np.where(a_vals > 0, a_vals, 1.0)
    factor = np.where(a_vals > 0, (1.0 - relaxed) / safe, at_zero)
    return np.fft.ifftn(factor * np.fft.fftn(source))


def execute(params: ExperimentParams, out_dir: Path, report: RunReport, *, threads: int | None = None) -> None:
    grid = GridSpec(dim=params.dim, n=params.n, L=params.L)
    a = multiplier_for(params)
    r = params.r
    u0 = StateField(grid=grid, values=gaussian(grid, params.width))
    source = gaussian(grid, params.width) if params.source == "gaussian" else None
    f = None if source is None else (lambda _t: source)

    times = sorted(params.t)
    norms, leakage, u = [], 0.0, u0
    for index, t in enumerate(times):
        u = evolve_full(u0, f, a, r, t, params.quad_steps, threads=threads)
        path = write_field_csv(out_dir / f"field_{index:03d}.csv", u)
        report.outputs.append(path.name)
        norms.append((t, u.l2_norm()))
        leakage = max(leakage, u.imaginary_leakage())
    path = write_table_csv(out_dir / "norms.csv", ["t", "l2_norm"], norms)
    report.outputs.append(path.name)
    logger.info(f"[MULTIPLIER] {a.growth_tag} r={r}: {len(times)} snapshots on {grid.shape}")

    report.checks.append(CheckResult.at_most("imaginary_leakage", leakage, LEAKAGE_WARN))
    if source is None:
        values = [norm for _, norm in norms]
        monotone = all(nxt <= prev * (1.0 + 1e-12) for prev, nxt in zip(values, values[1:]))
        report.checks.append(CheckResult.holds("norm_monotone_decay", monotone))

    t_max = times[-1]
    if t_max <= 0:
        return
    exact = evolve_hom(u0, a, r, t_max, threads=threads)
    stepped = evolve_hom_l1(u0, a, r, t_max, params.steps, threads=threads)
    report.checks.append(
        CheckResult.at_most("l1_oracle", relative_l2(stepped.values, exact.values), params.tol or L1_ORACLE_TOL)
    )
    if source is not None:
        from_solver = u.values - exact.values
        closed = forced_closed_form(source, a, grid, r, t_max, threads=threads)
        report.checks.append(
            CheckResult.at_most("duhamel_closed_form", relative_l2(from_solver, closed), params.rel_tol or DUHAMEL_TOL)
        )
