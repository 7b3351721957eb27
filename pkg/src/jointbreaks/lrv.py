"""Short- and long-run covariance estimation from regression residuals."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from jointbreaks.errors import InvalidArgumentError

AR1_CLAMP = 0.97
EIG_FLOOR_REL = 1e-10


@dataclass(frozen=True)
class HacEstimate:
    """Residual covariances.

    Attributes
    ----------
    sigma : ndarray
        Contemporaneous covariance ``T^{-1} sum_t u_t u_t'``.
    psi : ndarray
        Long-run covariance (quadratic spectral kernel), eigenvalue floored.
    bandwidth : float
    """

    sigma: NDArray[np.float64]
    psi: NDArray[np.float64]
    bandwidth: float


def qs_weight(x: ArrayLike) -> NDArray[np.float64] | float:
    """Quadratic spectral kernel weight.

    ``25 / (12 pi^2 x^2) * (sin(z)/z - cos(z))`` with ``z = 6 pi x / 5``;
    equal to 1 at the origin.
    """
    x = np.asarray(x, dtype=float)
    z = 6.0 * np.pi * x / 5.0
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    exact = 3.0 / zs**2 * (np.sin(zs) / zs - np.cos(zs))
    series = 1.0 - z**2 / 10.0 + z**4 / 280.0
    out = np.where(small, series, exact)
    return float(out) if out.ndim == 0 else out


def _ar1(u: NDArray) -> tuple[float, float]:
    lag, lead = u[:-1], u[1:]
    denom = float(lag @ lag)
    rho = float(lag @ lead) / denom if denom > 0 else 0.0
    e = lead - rho * lag
    return rho, float(e @ e) / len(e)


def andrews_bandwidth(residuals: ArrayLike) -> float:
    """Data-dependent QS bandwidth from per-series AR(1) approximations.

    Returns ``1.3221 * (a2 * T)^(1/5)`` where ``a2`` combines the AR(1)
    coefficients and innovation variances of all series with unit weights.
    Autoregressive coefficients beyond +-0.97 are clamped with a warning.
    """
    U = np.atleast_2d(np.asarray(residuals, dtype=float))
    T = U.shape[1]
    if T < 10:
        raise InvalidArgumentError(f"need T >= 10 for bandwidth selection, got {T}")
    num = den = 0.0
    for u in U:
        rho, s2 = _ar1(u)
        if abs(rho) >= AR1_CLAMP:
            warnings.warn(f"AR(1) coefficient {rho:.3f} clamped to +-{AR1_CLAMP}", RuntimeWarning,
                          stacklevel=2)
            rho = float(np.clip(rho, -AR1_CLAMP, AR1_CLAMP))
        num += 4.0 * rho**2 * s2**2 / (1.0 - rho) ** 8
        den += s2**2 / (1.0 - rho) ** 4
    if den == 0.0 or num == 0.0:
        return 0.0
    return 1.3221 * (num / den * T) ** 0.2


def floor_eigenvalues(M: ArrayLike, rel: float = EIG_FLOOR_REL) -> NDArray[np.float64]:
    """Symmetrise ``M`` and raise eigenvalues below ``rel * trace`` to that floor."""
    M = np.asarray(M, dtype=float)
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    floor = rel * max(float(np.trace(M)), 0.0)
    if w.min() >= floor:
        return M
    w = np.maximum(w, floor)
    return (V * w) @ V.T


def long_run_variance(residuals: ArrayLike, bandwidth: float | None = None) -> HacEstimate:
    """QS-kernel long-run covariance of ``n x T`` residuals.

    Parameters
    ----------
    residuals : array_like
        Residuals as produced by the fit; no further demeaning is done.
    bandwidth : float, optional
        Kernel bandwidth; chosen by :func:`andrews_bandwidth` if omitted.
        A bandwidth of 0 yields ``psi == sigma``.
    """
    U = np.atleast_2d(np.asarray(residuals, dtype=float))
    T = U.shape[1]
    if T < 10:
        raise InvalidArgumentError(f"need T >= 10 for long-run variance, got {T}")
    bw = andrews_bandwidth(U) if bandwidth is None else float(bandwidth)
    if bw < 0:
        raise InvalidArgumentError("bandwidth must be non-negative")
    sigma = U @ U.T / T
    psi = sigma.copy()
    if bw > 0:
        w = qs_weight(np.arange(1, T) / bw)
        for j in range(1, T):
            g = U[:, j:] @ U[:, :-j].T / T
            psi += w[j - 1] * (g + g.T)
    return HacEstimate(sigma, floor_eigenvalues(psi), bw)
