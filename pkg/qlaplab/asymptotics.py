"""Large-m expansions recovered by per-node least squares.

Three families are sampled on a fixed evaluation grid and fitted in powers
of m (n = 1):

    rho_m              ~ a_0 m + a_1 + ...
    T*_m T_m(f)        ~ b_0(f) m + b_1(f) + ...
    T*_m Delta_m T_m f ~ P_0(f) + P_1(f)/m + ...

The two leading coefficients are compared with their closed forms

    a_0 = 1, a_1 = scal/(8 pi),
    b_0 = f, b_1 = scal/(8 pi) f - Delta f/(2 pi),
    P_0 = Delta f, P_1 = -Delta^2 f / pi,

with Delta f = -2 pi f_zzb / lambda.
"""
import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from .base import FitError
from .geometry import (
    DictionaryFunction, KahlerStructure, bilaplacian, laplacian, scalar_curvature,
)
from .quadrature import build_grid, constant, l2_inner
from .qlaplacian import qlap_apply_toeplitz
from .quantization import adjoint_symbol, bergman_rho, toeplitz, toeplitz_adjoint_composite
from .sections import Level, prepare_level
from .types import CoefficientFit, ExpansionCheck, Grid, GridFunction, MSeries

logger = logging.getLogger(__name__)

DEFAULT_LADDER = (16, 24, 32, 48, 64)
DEFAULT_HOLDOUT = 96
EVAL_NODES = 32
MAX_CONDITION = 1e12
EXACT_FLOOR = 1e-12
SLOPE_WINDOW = 0.4

# reported powers followed by up to two nuisance powers
TARGET_POWERS = {
    "rho": (1.0, 0.0, -1.0, -2.0),
    "tt": (1.0, 0.0, -1.0, -2.0),
    "qlap": (0.0, -1.0, -2.0, -3.0),
}
DEFAULT_TOLERANCES = {
    "rho": (0.02, 0.02),
    "tt": (0.02, 0.05),
    "qlap": (0.02, 0.05),
}


def fit_powers(target: str, fit_levels: int, reported: int = 2) -> Tuple[float, ...]:
    """Reported powers plus as many nuisance powers as the ladder supports."""
    powers = TARGET_POWERS[target]
    nuisance = min(len(powers) - reported, max(0, fit_levels - 1 - reported))
    return powers[:reported + nuisance]


def evaluation_grid(ns: int = EVAL_NODES, ntheta: int = EVAL_NODES) -> Grid:
    """Fixed Gauss-Legendre grid shared by every level of a series."""
    return build_grid(1, ns, ntheta)


def _design(m_values: Sequence[int], powers: Sequence[float]) -> np.ndarray:
    m = np.asarray(m_values, dtype=float)
    return m[:, None] ** np.asarray(powers, dtype=float)[None, :]


def _lstsq(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    re = scipy.linalg.lstsq(X, Y.real)[0]
    im = scipy.linalg.lstsq(X, Y.imag)[0]
    return re + 1j * im


def richardson_fit(
    series: MSeries,
    powers: Sequence[float],
    holdout: Optional[int] = None,
    reported: int = 2,
) -> CoefficientFit:
    """Fit every node of ``series`` against m**p for p in ``powers``.

    Args:
        series: Samples on a common grid, levels increasing.
        powers: Exponents, leading first.
        holdout: A level present in ``series`` that is left out of the fit
            and only used by the order gate.
        reported: Number of leading coefficients covered by the order gate.

    Returns:
        CoefficientFit with per-node residuals and order-gate data.

    Raises:
        FitError: If there are too few levels or the design is ill-conditioned.
    """
    powers = tuple(float(p) for p in powers)
    levels = list(series.m_values)
    data = series.stacked()
    if holdout is not None and holdout not in levels:
        raise FitError(f"Held-out level {holdout} is not in the series {levels}")
    fit_rows = [i for i, m in enumerate(levels) if m != holdout]
    fit_levels = [levels[i] for i in fit_rows]
    if len(fit_levels) < max(3, len(powers) + 1):
        raise FitError(
            f"{len(fit_levels)} levels cannot determine {len(powers)} powers; "
            f"need at least {max(3, len(powers) + 1)}"
        )

    X = _design(fit_levels, powers)
    scale = np.linalg.norm(X, axis=0)
    Xs = X / scale
    condition = float(np.linalg.cond(Xs))
    logger.debug(f"Fit '{series.label}' on m={fit_levels}: condition {condition:.2e}")
    if not np.isfinite(condition) or condition > MAX_CONDITION:
        raise FitError(
            f"Design matrix for levels {fit_levels} has condition {condition:.2e}; "
            "widen the m range"
        )

    Y = data[fit_rows]
    coef = _lstsq(Xs, Y) / scale[:, None]
    residual = np.max(np.abs(Y - X @ coef), axis=0).reshape(series.grid.shape)
    coefficients = tuple(
        GridFunction(series.grid, c.reshape(series.grid.shape), label=f"{series.label}[m^{p:g}]")
        for p, c in zip(powers, coef)
    )

    # truncation error of the reported terms over every level
    reported = min(reported, len(powers))
    head = _design(levels, powers[:reported]) @ coef[:reported]
    errors = np.max(np.abs(data - head), axis=1)
    floor = EXACT_FLOOR * max(1.0, float(np.max(np.abs(data))))
    predicted = powers[reported] if len(powers) > reported else powers[reported - 1] - 1.0
    alive = errors > floor
    observed = None
    if np.count_nonzero(alive) >= 2:
        observed = float(np.polyfit(np.log(np.asarray(levels, float)[alive]),
                                    np.log(errors[alive]), 1)[0])
        if abs(observed - predicted) > SLOPE_WINDOW:
            logger.warning(
                f"Fit '{series.label}': truncation slope {observed:.3f}, expected {predicted:g}"
            )

    holdout_residual = None
    if holdout is not None:
        h = levels.index(holdout)
        holdout_residual = float(np.max(np.abs(data[h] - (_design([holdout], powers) @ coef)[0])))

    return CoefficientFit(
        label=series.label,
        powers=powers,
        coefficients=coefficients,
        residual=residual,
        sup_residual=float(np.max(residual)),
        condition=condition,
        truncation_levels=tuple(levels),
        truncation_errors=tuple(float(e) for e in errors),
        observed_slope=observed,
        predicted_slope=predicted,
        holdout_residual=holdout_residual,
    )


def relative_sup_error(fitted: GridFunction, reference: GridFunction) -> float:
    """sup|fitted - reference| / sup|reference|; absolute when the reference vanishes."""
    diff = float(np.max(np.abs(fitted.values - reference.values)))
    scale = reference.sup_norm()
    return diff / scale if scale > EXACT_FLOOR else diff


def _levels_of(
    m_values: Sequence[int], holdout: Optional[int]
) -> List[int]:
    levels = sorted(set(int(m) for m in m_values) | ({int(holdout)} if holdout else set()))
    if levels[0] < 1:
        raise FitError(f"Levels must be positive, got {levels}")
    return levels


def sample_series(
    K: KahlerStructure,
    target: str,
    f: Optional[DictionaryFunction],
    levels: Sequence[int],
    grid: Grid,
    prepare: Callable[[int], Level],
) -> MSeries:
    """Sample rho_m, T*T(f) or T* Delta_m T(f) on ``grid`` for every level."""
    label = target if f is None else f"{target}({f.expression})"
    series = MSeries(label, grid)
    for m in levels:
        level = prepare(m)
        table = level.with_grid(grid)
        if target == "rho":
            sample = bergman_rho(level, table)
        elif target == "tt":
            sample = toeplitz_adjoint_composite(level, f, table)
        elif target == "qlap":
            sample = adjoint_symbol(level, qlap_apply_toeplitz(level, toeplitz(level, f)), table)
        else:
            raise ValueError(f"Unknown expansion target: {target}")
        series.add(m, sample)
        logger.info(f"Sampled {label} at m={m} for {K.spec}")
    return series


def references(
    K: KahlerStructure, target: str, f: Optional[DictionaryFunction], grid: Grid
) -> Tuple[GridFunction, GridFunction]:
    """Closed forms of the two leading coefficients."""
    scal = scalar_curvature(K, grid).values.real / (8 * np.pi)
    if target == "rho":
        return constant(grid, 1.0), GridFunction(grid, scal.astype(complex), label="scal/8pi")
    values = f.grid_function(grid).values
    lap = laplacian(K, f, grid).values
    if target == "tt":
        return (GridFunction(grid, values, label="b0"),
                GridFunction(grid, scal * values - lap / (2 * np.pi), label="b1"))
    if target == "qlap":
        bilap = bilaplacian(K, f, grid).values
        return (GridFunction(grid, lap, label="P0"),
                GridFunction(grid, -bilap / np.pi, label="P1"))
    raise ValueError(f"Unknown expansion target: {target}")


def expansion_check(
    K: KahlerStructure,
    target: str,
    f: Optional[DictionaryFunction] = None,
    m_values: Sequence[int] = DEFAULT_LADDER,
    holdout: Optional[int] = DEFAULT_HOLDOUT,
    ns: Optional[int] = None,
    ntheta: Optional[int] = None,
    workers: int = 1,
    grid: Optional[Grid] = None,
    tolerances: Optional[Sequence[float]] = None,
    prepare: Optional[Callable[[int], Level]] = None,
) -> ExpansionCheck:
    """Sample, fit and compare one expansion family.

    ``prepare`` maps a level to its prepared Level (e.g. a cached lookup);
    by default every level is prepared on its auto-sized grid.
    """
    if target not in TARGET_POWERS:
        raise ValueError(f"Unknown expansion target: {target}")
    if target != "rho" and f is None:
        raise ValueError(f"Target '{target}' needs a dictionary function")
    grid = grid or evaluation_grid()
    prepare = prepare or (lambda m: prepare_level(K, m, ns, ntheta, workers))
    levels = _levels_of(m_values, holdout)

    series = sample_series(K, target, f, levels, grid, prepare)
    n_fit = len(levels) - (1 if holdout is not None else 0)
    fit = richardson_fit(series, fit_powers(target, n_fit), holdout=holdout)
    refs = references(K, target, f, grid)
    errors = tuple(relative_sup_error(c, r) for c, r in zip(fit.coefficients, refs))
    tol = tuple(tolerances) if tolerances is not None else DEFAULT_TOLERANCES[target]
    check = ExpansionCheck(fit=fit, references=refs, errors=errors, tolerances=tol)
    logger.info(
        f"Expansion {series.label} on {K.spec}: errors {[f'{e:.2e}' for e in errors]}, "
        f"slope {fit.observed_slope} vs {fit.predicted_slope}"
    )
    return check


def rho_expansion_check(K: KahlerStructure, m_values: Sequence[int] = DEFAULT_LADDER,
                        **kwargs) -> ExpansionCheck:
    """rho_m against a_0 m + a_1."""
    return expansion_check(K, "rho", None, m_values, **kwargs)


def tt_expansion_check(K: KahlerStructure, f: DictionaryFunction,
                       m_values: Sequence[int] = DEFAULT_LADDER, **kwargs) -> ExpansionCheck:
    """T*_m T_m(f) against b_0(f) m + b_1(f)."""
    return expansion_check(K, "tt", f, m_values, **kwargs)


def qlap_expansion_check(K: KahlerStructure, f: DictionaryFunction,
                         m_values: Sequence[int] = DEFAULT_LADDER, **kwargs) -> ExpansionCheck:
    """T*_m Delta_m T_m(f) against P_0(f) + P_1(f)/m, through the apply route."""
    return expansion_check(K, "qlap", f, m_values, **kwargs)


def self_adjointness_defect(
    K: KahlerStructure,
    f: DictionaryFunction,
    g: DictionaryFunction,
    Pf: GridFunction,
    Pg: GridFunction,
) -> float:
    """|<P f, g> - <f, P g>| relative to |<P f, g>| on the evaluation grid of Pf."""
    grid = Pf.grid
    Pg.check_grid(grid)
    lhs = l2_inner(K, Pf, g.grid_function(grid))
    rhs = l2_inner(K, f.grid_function(grid), Pg)
    scale = max(abs(lhs), abs(rhs))
    return abs(lhs - rhs) / scale if scale > EXACT_FLOOR else abs(lhs - rhs)


def coefficient_columns(check: ExpansionCheck) -> Dict[str, np.ndarray]:
    """Per-node CSV columns: coordinates, fitted coefficients, references, residual."""
    fit = check.fit
    grid = fit.coefficients[0].grid
    s, theta = np.meshgrid(grid.s, grid.theta, indexing="ij")
    columns = {
        "node": np.arange(grid.size),
        "s": s.reshape(-1),
        "theta": theta.reshape(-1),
    }
    for p, c in zip(fit.powers, fit.coefficients):
        columns[f"coef_m{p:+g}"] = c.values.reshape(-1)
    for k, r in enumerate(check.references):
        columns[f"ref_{k}"] = r.values.reshape(-1)
    columns["residual"] = fit.residual.reshape(-1)
    return columns
