"""Residual VAR(1) bootstrap for the break tests.

Under the null, the trend is estimated with the restriction imposed, a
bias-corrected VAR(1) is fitted to its residuals, and pseudo-samples are
built by adding a resampled VAR path to the restricted trend. Every
replicate draws from its own stream spawned from one ``SeedSequence``, so
results do not depend on the number of worker processes.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from numpy.typing import NDArray

from jointbreaks.break_search import RestrictionSet, SearchConfig, system_break_search
from jointbreaks.break_tests import TestReport, run_test
from jointbreaks.errors import InvalidArgumentError, JointBreaksError, NumericalFailureError
from jointbreaks.trend_model import MultiSeries, SystemFit

log = logging.getLogger(__name__)

STATIONARY_RADIUS = 0.999

StatFn = Callable[[MultiSeries], "float | NDArray[np.float64]"]


@dataclass(frozen=True)
class VarModel:
    """VAR(1) with intercept, ``u_t = c + A u_{t-1} + e_t``.

    Attributes
    ----------
    intercept : ndarray, shape (n,)
    A : ndarray, shape (n, n)
    innovations : ndarray, shape (n, T-1)
    source : ndarray, shape (n, T)
        Residuals the model was fitted to (used for start-up values).
    bias_corrected : bool
    """

    intercept: NDArray[np.float64]
    A: NDArray[np.float64]
    innovations: NDArray[np.float64]
    source: NDArray[np.float64]
    bias_corrected: bool = False

    @property
    def spectral_radius(self) -> float:
        return spectral_radius(self.A)


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    Parameters
    ----------
    replications : int
        Number of bootstrap samples ``B``.
    seed : int
    warp_speed : bool
        One bootstrap draw per Monte Carlo replicate (simulation studies only).
    resample : str
        Innovation resampling scheme; only ``"iid_innovations"``.
    kilian_reps : int
        Inner replications for the VAR bias correction (0 disables it).
    burn_in : int
    workers : int
        Worker processes; results are identical for any value.
    """

    replications: int = 199
    seed: int = 0
    warp_speed: bool = False
    resample: str = "iid_innovations"
    kilian_reps: int = 200
    burn_in: int = 50
    workers: int = 1

    def __post_init__(self) -> None:
        if self.replications < 1:
            raise InvalidArgumentError("replications must be positive")
        if self.resample != "iid_innovations":
            raise InvalidArgumentError(f"unsupported resampling scheme {self.resample!r}")
        if self.workers < 1:
            raise InvalidArgumentError("workers must be >= 1")


def spectral_radius(A: NDArray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(A)))) if A.size else 0.0


def fit_var1(residuals: NDArray) -> VarModel:
    """Least-squares VAR(1) with intercept."""
    U = np.atleast_2d(np.asarray(residuals, dtype=float))
    n, T = U.shape
    if T < n + 5:
        raise InvalidArgumentError(f"need T >= n + 5 for a VAR(1), got T={T}, n={n}")
    Z = np.column_stack([np.ones(T - 1), U[:, :-1].T])
    B, _, rank, _ = np.linalg.lstsq(Z, U[:, 1:].T, rcond=None)
    if rank < Z.shape[1]:
        raise NumericalFailureError("singular VAR(1) design (collinear residual series)")
    c, A = B[0], B[1:].T
    innov = U[:, 1:] - c[:, None] - A @ U[:, :-1]
    return VarModel(c, A, innov, U)


def simulate_var(model: VarModel, T: int, rng: np.random.Generator, burn_in: int = 50,
                 paths: int | None = None) -> NDArray:
    """Path(s) of length ``T`` driven by iid draws of the centred innovations.

    Returns ``n x T``, or ``paths x n x T`` when ``paths`` is given. Each
    path starts from a randomly drawn in-sample residual vector.
    """
    reps = 1 if paths is None else int(paths)
    e = model.innovations - model.innovations.mean(axis=1, keepdims=True)
    n, N = e.shape
    draws = e[:, rng.integers(0, N, size=(reps, T + burn_in))].transpose(1, 0, 2)
    x = model.source[:, rng.integers(0, model.source.shape[1], size=reps)].T
    out = np.empty((reps, n, T + burn_in))
    c, At = model.intercept, model.A.T
    for t in range(T + burn_in):
        x = c + x @ At + draws[:, :, t]
        out[:, :, t] = x
    out = out[:, :, burn_in:]
    return out[0] if paths is None else out


def _var1_slopes(paths: NDArray) -> NDArray:
    """Least-squares VAR(1) slope matrices of a ``paths x n x T`` stack."""
    lag = paths[:, :, :-1]
    lead = paths[:, :, 1:]
    lag_c = lag - lag.mean(axis=2, keepdims=True)
    lead_c = lead - lead.mean(axis=2, keepdims=True)
    Sxx = lag_c @ lag_c.transpose(0, 2, 1)
    Sxy = lag_c @ lead_c.transpose(0, 2, 1)
    return np.linalg.solve(Sxx, Sxy).transpose(0, 2, 1)


def kilian_correct(model: VarModel, residuals: NDArray, rng: np.random.Generator,
                   reps: int = 200, burn_in: int = 50) -> VarModel:
    """Bootstrap bias correction of the VAR(1) slope matrix.

    The bias estimate is scaled by 1/2, 1/4, ... until the corrected matrix
    is stable. A non-stationary estimate is not bias corrected; it is
    rescaled to spectral radius ``STATIONARY_RADIUS`` instead.
    """
    U = np.atleast_2d(np.asarray(residuals, dtype=float))
    T = U.shape[1]
    A_hat = model.A
    if reps <= 0:
        return model
    radius = spectral_radius(A_hat)
    if radius >= 1.0:
        A_c = A_hat * (STATIONARY_RADIUS / radius)
        log.warning("VAR(1) estimate has spectral radius %.3f; shrunk to %.3f", radius, STATIONARY_RADIUS)
    else:
        bias = _var1_slopes(simulate_var(model, T, rng, burn_in, paths=reps)).mean(axis=0) - A_hat
        scale = 1.0
        A_c = A_hat - bias
        for _ in range(60):
            if spectral_radius(A_c) < 1.0:
                break
            scale *= 0.5
            A_c = A_hat - scale * bias
        else:
            A_c = A_hat
    resid = U[:, 1:] - A_c @ U[:, :-1]
    c = resid.mean(axis=1)
    return VarModel(c, A_c, resid - c[:, None], U, bias_corrected=True)


def make_null_sample(y: MultiSeries, null_fit: SystemFit, var: VarModel, rng: np.random.Generator,
                     burn_in: int = 50) -> MultiSeries:
    """Restricted trend plus a simulated VAR(1) error path."""
    return y.with_values(null_fit.fitted() + simulate_var(var, y.T, rng, burn_in))


def null_error_model(null_fit: SystemFit, rng: np.random.Generator, cfg: BootstrapConfig) -> VarModel:
    """Bias-corrected VAR(1) for the residuals of a restricted fit."""
    var = fit_var1(null_fit.residuals)
    return kilian_correct(var, null_fit.residuals, rng, cfg.kilian_reps, cfg.burn_in)


@dataclass(frozen=True)
class BootstrapResult:
    """Bootstrap p-value(s) and the replicate statistics behind them."""

    p_value: NDArray[np.float64]
    statistics: NDArray[np.float64]
    failures: int
    var: VarModel = field(repr=False)


def _replicate(b: int, statistic: StatFn, y: MultiSeries, null_fit: SystemFit, var: VarModel,
               seeds: Sequence[np.random.SeedSequence], burn_in: int) -> NDArray[np.float64]:
    rng = np.random.default_rng(seeds[b])
    sample = make_null_sample(y, null_fit, var, rng, burn_in)
    try:
        return np.atleast_1d(np.asarray(statistic(sample), dtype=float))
    except (JointBreaksError, np.linalg.LinAlgError) as exc:
        log.warning("bootstrap replicate %d failed: %s", b, exc)
        return np.array([np.nan])


def _run_indexed(fn: Callable[[int], NDArray], indices: Sequence[int], workers: int) -> list[NDArray]:
    if workers <= 1:
        return [fn(b) for b in indices]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, indices, chunksize=max(1, len(indices) // (4 * workers))))


def bootstrap_pvalue(statistic: StatFn, y: MultiSeries, null_fit: SystemFit, cfg: BootstrapConfig,
                     observed: float | NDArray | None = None) -> BootstrapResult:
    """Bootstrap p-value ``(1 + #{stat* >= stat}) / (B + 1)``.

    Parameters
    ----------
    statistic : callable
        Maps a sample to a statistic (scalar or vector; p-values are formed
        component-wise). Must be picklable when ``cfg.workers > 1``.
    y : MultiSeries
        Observed sample.
    null_fit : SystemFit
        Fit with the null hypothesis imposed.
    cfg : BootstrapConfig
    observed : float or ndarray, optional
        Observed statistic; computed from ``y`` if omitted.

    Notes
    -----
    Replicates whose statistic cannot be computed count as exceedances.
    """
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.replications + 1)
    var = null_error_model(null_fit, np.random.default_rng(seeds[0]), cfg)
    obs = np.atleast_1d(np.asarray(statistic(y) if observed is None else observed, dtype=float))
    fn = partial(_replicate, statistic=statistic, y=y, null_fit=null_fit, var=var, seeds=seeds,
                 burn_in=cfg.burn_in)
    stats = _run_indexed(fn, range(1, cfg.replications + 1), cfg.workers)
    out = np.full((cfg.replications, obs.size), np.nan)
    for b, s in enumerate(stats):
        if s.size == obs.size:
            out[b] = s
    failed = np.isnan(out)
    exceed = failed | (out >= obs[None, :])
    p = (1.0 + exceed.sum(axis=0)) / (cfg.replications + 1.0)
    return BootstrapResult(p, out, int(failed.any(axis=1).sum()), var)


def _test_statistic(y: MultiSeries, method: str, m: Sequence[int], restriction: RestrictionSet,
                    cfg: SearchConfig) -> float:
    return run_test(method, y, m, restriction, cfg).statistic


def null_fit_for(method: str, y: MultiSeries, m: Sequence[int], restriction: RestrictionSet,
                 cfg: SearchConfig) -> SystemFit:
    """Trend fit with the null imposed, using the estimator matching ``method``."""
    est = "ols" if method == "OLS_WALD" else "fgls"
    return system_break_search(y, m, restriction, replace(cfg, estimator=est))[1]


def bootstrap_test(method: str, y: MultiSeries, m: Sequence[int], restriction: RestrictionSet,
                   cfg: SearchConfig | None = None,
                   boot: BootstrapConfig | None = None) -> TestReport:
    """Run one test and attach its bootstrap p-value."""
    cfg = cfg or SearchConfig()
    boot = boot or BootstrapConfig()
    report = run_test(method, y, m, restriction, cfg)
    null_fit = null_fit_for(method, y, m, restriction, cfg)
    stat = partial(_test_statistic, method=method, m=tuple(m), restriction=restriction, cfg=cfg)
    res = bootstrap_pvalue(stat, y, null_fit, boot, observed=report.statistic)
    return replace(report, p_bootstrap=float(res.p_value[0]))


def warp_speed_decisions(observed: NDArray, boot: NDArray, level: float = 0.05) -> NDArray[np.bool_]:
    """Reject where the observed statistic exceeds the pooled bootstrap quantile.

    ``observed`` and ``boot`` are ``(reps, h)`` arrays holding, per Monte
    Carlo replicate, the observed statistic and its single bootstrap
    counterpart for each of ``h`` hypotheses. Failed bootstrap draws
    (NaN) are treated as ``+inf``.
    """
    observed = np.atleast_2d(np.asarray(observed, dtype=float))
    boot = np.atleast_2d(np.asarray(boot, dtype=float))
    boot = np.where(np.isnan(boot), np.inf, boot)
    with np.errstate(invalid="ignore"):
        crit = np.quantile(boot, 1.0 - level, axis=0)
    crit = np.where(np.isnan(crit), np.inf, crit)
    return observed > crit[None, :]


def warp_speed_rates(observed: NDArray, boot: NDArray, level: float = 0.05) -> NDArray[np.float64]:
    """Warp-speed bootstrap rejection frequency per hypothesis column."""
    return warp_speed_decisions(observed, boot, level).mean(axis=0)
