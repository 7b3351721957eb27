"""LR and Wald tests of linear restrictions on break fractions."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import gammaincc

from jointbreaks.break_search import (
    RestrictionSet,
    SearchConfig,
    ols_break_search,
    ols_fit_single,
    system_break_search,
)
from jointbreaks.errors import InvalidArgumentError, NumericalFailureError
from jointbreaks.limit_dist import assemble_eq_limit_cov, assemble_limit_cov
from jointbreaks.lrv import long_run_variance
from jointbreaks.trend_model import BreakVector, MultiSeries, SystemFit

METHODS = ("LR", "GLS_WALD", "OLS_WALD")


@dataclass(frozen=True)
class TestReport:
    """Outcome of one test of ``R lambda = r``.

    Attributes
    ----------
    statistic : float
    df : int
        ``rank(R)``.
    p_asymptotic : float
        Chi-square upper-tail probability.
    p_bootstrap : float or None
    k_restricted : BreakVector or None
        Restricted estimate (LR only).
    k_unrestricted : BreakVector
    method : {"LR", "GLS_WALD", "OLS_WALD"}
    boundary : bool
        An estimated break sits on the edge of the trimmed grid.
    unreliable : bool
        LR only: residual serial correlation is material (data-chosen HAC
        bandwidth above 1), so the chi-square reference is not pivotal.
    bandwidth : float
    """

    __test__ = False

    statistic: float
    df: int
    p_asymptotic: float
    k_unrestricted: BreakVector
    method: str
    k_restricted: BreakVector | None = None
    p_bootstrap: float | None = None
    boundary: bool = False
    unreliable: bool = False
    bandwidth: float = float("nan")

    def rejects(self, level: float = 0.05, bootstrap: bool = False) -> bool:
        p = self.p_bootstrap if bootstrap else self.p_asymptotic
        if p is None:
            raise InvalidArgumentError("no bootstrap p-value attached")
        return p < level


def chi_square_sf(x: float, q: int) -> float:
    """Upper-tail probability of a chi-square variable with ``q`` degrees of freedom."""
    if q < 1:
        raise InvalidArgumentError("degrees of freedom must be >= 1")
    if x <= 0:
        return 1.0
    return float(gammaincc(0.5 * q, 0.5 * x))


def _on_boundary(k: BreakVector, T: int, cfg: SearchConfig) -> bool:
    lo, hi = cfg.bounds(T)
    return any(d in (lo, hi) for d in k.stacked())


def _clamped_fractions(k: BreakVector, T: int) -> list[NDArray[np.float64]]:
    return [np.clip(f, 1.0 / T, 1.0 - 1.0 / T) for f in k.fractions(T)]


def _wald(R: NDArray, r: NDArray, lam: NDArray, xi: NDArray, T: int) -> float:
    g = R @ lam - r
    V = R @ xi @ R.T
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalFailureError(f"R Xi R' is singular (condition number {cond:.3g})")
    return float(T**3 * g @ np.linalg.solve(V, g))


def _check(y: MultiSeries, m: Sequence[int], restriction: RestrictionSet) -> list[int]:
    counts = [int(c) for c in m]
    if len(counts) != y.n:
        raise InvalidArgumentError(f"{len(counts)} break counts for {y.n} equations")
    if restriction.m != sum(counts):
        raise InvalidArgumentError("restriction dimension does not match the number of breaks")
    if restriction.q == 0:
        raise InvalidArgumentError("restriction has no rows to test")
    return counts


def lr_test(y: MultiSeries, m: Sequence[int], restriction: RestrictionSet,
            cfg: SearchConfig | None = None,
            unrestricted: tuple[BreakVector, SystemFit] | None = None) -> TestReport:
    """Likelihood-ratio test: ``T`` times the rise in ``log det Sigma_hat`` under the restriction.

    ``unrestricted`` may carry a precomputed unrestricted search result.
    """
    cfg = cfg or SearchConfig()
    _check(y, m, restriction)
    k_u, fit_u = unrestricted or system_break_search(y, m, None, cfg)
    k_r, fit_r = system_break_search(y, m, restriction, cfg)
    stat = max(0.0, y.T * (fit_r.logdet - fit_u.logdet))
    bw = long_run_variance(fit_u.residuals).bandwidth
    q = restriction.q
    return TestReport(stat, q, chi_square_sf(stat, q), k_u, "LR", k_restricted=k_r,
                      boundary=_on_boundary(k_u, y.T, cfg) or _on_boundary(k_r, y.T, cfg),
                      unreliable=bw > 1.0, bandwidth=bw)


def gls_wald_test(y: MultiSeries, m: Sequence[int], restriction: RestrictionSet,
                  cfg: SearchConfig | None = None,
                  unrestricted: tuple[BreakVector, SystemFit] | None = None) -> TestReport:
    """Wald test built on the system (FGLS) break-fraction estimates.

    Plug-ins (fractions, slope changes, short- and long-run covariances)
    all come from the unrestricted fit. When the estimates satisfy the
    restriction exactly the statistic is 0 and no covariance is formed, so
    degenerate systems (a series paired with itself) do not fail.
    """
    cfg = cfg or SearchConfig()
    _check(y, m, restriction)
    k_u, fit_u = unrestricted or system_break_search(y, m, None, cfg)
    hac = long_run_variance(fit_u.residuals)
    lam = k_u.stacked() / y.T
    if np.all(restriction.R @ lam - restriction.r == 0):
        stat = 0.0
    else:
        cov = assemble_limit_cov(_clamped_fractions(k_u, y.T), fit_u.deltas(), fit_u.sigma, hac.psi)
        stat = max(0.0, _wald(restriction.R, restriction.r, lam, cov.xi, y.T))
    q = restriction.q
    return TestReport(stat, q, chi_square_sf(stat, q), k_u, "GLS_WALD",
                      boundary=_on_boundary(k_u, y.T, cfg), bandwidth=hac.bandwidth)


def ols_wald_test(y: MultiSeries, m: Sequence[int], restriction: RestrictionSet,
                  cfg: SearchConfig | None = None) -> TestReport:
    """Wald test built on equation-by-equation least-squares break estimates."""
    cfg = cfg or SearchConfig()
    counts = _check(y, m, restriction)
    ks, resid, deltas = [], [], []
    for yi, mi in zip(y.values, counts):
        k_i, _ = ols_break_search(yi, mi, cfg)
        params, _, u = ols_fit_single(yi, k_i)
        ks.append(k_i)
        resid.append(u)
        deltas.append(params.delta)
    k = BreakVector(tuple(ks))
    hac = long_run_variance(np.vstack(resid))
    cov = assemble_eq_limit_cov(_clamped_fractions(k, y.T), deltas, hac.psi)
    stat = max(0.0, _wald(restriction.R, restriction.r, k.stacked() / y.T, cov.xi_s, y.T))
    q = restriction.q
    return TestReport(stat, q, chi_square_sf(stat, q), k, "OLS_WALD",
                      boundary=_on_boundary(k, y.T, cfg), bandwidth=hac.bandwidth)


def run_test(method: str, y: MultiSeries, m: Sequence[int], restriction: RestrictionSet,
             cfg: SearchConfig | None = None,
             unrestricted: tuple[BreakVector, SystemFit] | None = None) -> TestReport:
    """Dispatch on ``method`` (one of ``METHODS``)."""
    if method == "LR":
        return lr_test(y, m, restriction, cfg, unrestricted)
    if method == "GLS_WALD":
        return gls_wald_test(y, m, restriction, cfg, unrestricted)
    if method == "OLS_WALD":
        return ols_wald_test(y, m, restriction, cfg)
    raise InvalidArgumentError(f"unknown test method {method!r}")
