"""Tests for one additional slope break on top of an estimated break configuration.

The maintained break dates are held at their estimates under both the null
and the alternative; only the position of the extra break is profiled.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, replace
from functools import partial

import numpy as np
from numpy.typing import NDArray

from jointbreaks.bootstrap import BootstrapConfig, bootstrap_pvalue
from jointbreaks.break_search import SearchConfig, _Design, _gls_values, system_break_search
from jointbreaks.errors import InvalidArgumentError, NumericalFailureError
from jointbreaks.trend_model import BreakVector, MultiSeries

log = logging.getLogger(__name__)

DEFAULT_TRIM = 0.1


@dataclass(frozen=True)
class AddBreakReport:
    """Outcome of an additional-break test.

    Attributes
    ----------
    statistic : float
        Largest LR over the admissible dates (and equations, for sup-LR).
    nu_hat : int
        Date of the extra break attaining the maximum.
    equation_hat : int
    grid : ndarray
        Admissible dates of the winning equation.
    profile : ndarray
        LR at each date of ``grid``.
    p_bootstrap : float or None
    base_breaks : BreakVector
    """

    statistic: float
    nu_hat: int
    equation_hat: int
    grid: NDArray[np.int64]
    profile: NDArray[np.float64]
    base_breaks: BreakVector
    p_bootstrap: float | None = None


def admissible_grid(k_hat: BreakVector, i: int, trim: float, T: int) -> NDArray[np.int64]:
    """Dates ``h`` with ``trim <= h/T <= 1 - trim`` at least ``trim`` away from breaks of equation ``i``."""
    if not 0 < trim < 0.5:
        raise InvalidArgumentError("trim must lie in (0, 0.5)")
    if not 0 <= i < k_hat.n:
        raise InvalidArgumentError(f"equation index {i} outside 0..{k_hat.n - 1}")
    h = np.arange(2, T - 1)
    v = h / T
    tol = 1e-9
    ok = (v >= trim - tol) & (v <= 1 - trim + tol)
    for lam in np.asarray(k_hat.per_equation[i], dtype=float) / T:
        ok &= np.abs(v - lam) >= trim - tol
    if not ok.any():
        raise InvalidArgumentError(f"no admissible date for an extra break in equation {i} (trim={trim})")
    return h[ok]


def _profile(design: _Design, k_hat: BreakVector, i: int, grid: NDArray, cfg: SearchConfig,
             base_value: float) -> NDArray[np.float64]:
    def cols_for(hs):
        cols = []
        for j, ks in enumerate(k_hat.per_equation):
            base = np.tile(np.asarray(ks, dtype=np.int64) - 1, (len(hs), 1))
            if j == i:
                base = np.column_stack([base, np.asarray(hs) - 1])
            cols.append(base.reshape(len(hs), -1))
        return cols

    try:
        values, _ = _gls_values(design, cols_for(grid), cfg.max_fgls_iter, cfg.fgls_tol)
    except np.linalg.LinAlgError:
        values = np.full(len(grid), np.nan)
        for a, h in enumerate(grid):
            try:
                values[a] = _gls_values(design, cols_for([h]), cfg.max_fgls_iter, cfg.fgls_tol)[0][0]
            except np.linalg.LinAlgError:
                log.warning("augmented fit failed at date %d of equation %d; skipped", h, i)
        if np.all(np.isnan(values)):
            raise NumericalFailureError("augmented fit failed at every candidate date") from None
    return np.maximum(design.T * (base_value - values), 0.0)


def _base_value(design: _Design, k_hat: BreakVector, cfg: SearchConfig) -> float:
    cols = [np.asarray(ks, dtype=np.int64)[None, :] - 1 for ks in k_hat.per_equation]
    return float(_gls_values(design, cols, cfg.max_fgls_iter, cfg.fgls_tol)[0][0])


def lr_extra_break(y: MultiSeries, k_hat: BreakVector, equation: int, trim: float = DEFAULT_TRIM,
                   cfg: SearchConfig | None = None) -> AddBreakReport:
    """LR test for one extra slope break in ``equation``, date unknown."""
    cfg = cfg or SearchConfig()
    if k_hat.n != y.n:
        raise InvalidArgumentError(f"break vector has {k_hat.n} equations, data has {y.n}")
    k_hat.validate(y.T)
    design = _Design(y.values)
    grid = admissible_grid(k_hat, equation, trim, y.T)
    prof = _profile(design, k_hat, equation, grid, cfg, _base_value(design, k_hat, cfg))
    a = int(np.nanargmax(prof))
    return AddBreakReport(float(prof[a]), int(grid[a]), int(equation), grid, prof, k_hat)


def sup_lr_extra_break(y: MultiSeries, k_hat: BreakVector, trim: float = DEFAULT_TRIM,
                       cfg: SearchConfig | None = None) -> AddBreakReport:
    """Largest extra-break LR over all equations (ties go to the lowest index)."""
    best = None
    for i in range(y.n):
        rep = lr_extra_break(y, k_hat, i, trim, cfg)
        if best is None or rep.statistic > best.statistic:
            best = rep
    return best


def _extra_statistic(y: MultiSeries, m: tuple[int, ...], equation: int | None, trim: float,
                     cfg: SearchConfig) -> float:
    k_hat, _ = system_break_search(y, m, None, cfg)
    if equation is None:
        return sup_lr_extra_break(y, k_hat, trim, cfg).statistic
    return lr_extra_break(y, k_hat, equation, trim, cfg).statistic


def extra_break_test(y: MultiSeries, m: Sequence[int], equation: int | None = None,
                     trim: float = DEFAULT_TRIM, cfg: SearchConfig | None = None,
                     boot: BootstrapConfig | None = None) -> AddBreakReport:
    """Estimate the maintained breaks, run the (sup-)LR test and bootstrap its p-value.

    Bootstrap samples are built from the maintained-break fit, and every
    replicate re-estimates the maintained breaks before profiling the extra one.
    """
    cfg = cfg or SearchConfig()
    m = tuple(int(c) for c in m)
    k_hat, fit = system_break_search(y, m, None, cfg)
    rep = (sup_lr_extra_break(y, k_hat, trim, cfg) if equation is None
           else lr_extra_break(y, k_hat, equation, trim, cfg))
    if boot is None:
        return rep
    stat = partial(_extra_statistic, m=m, equation=equation, trim=trim, cfg=cfg)
    res = bootstrap_pvalue(stat, y, fit, boot, observed=rep.statistic)
    return replace(rep, p_bootstrap=float(res.p_value[0]))
