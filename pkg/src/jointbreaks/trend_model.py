"""Data model for systems of joined segmented linear trends.

Each series ``i`` follows

    y_it = mu_i + beta_i * t + sum_j delta_ij * b_t(k_ij) + u_it,   t = 1..T

with ``b_t(k) = max(t - k, 0)``: the trend is continuous at every break date
and only its slope changes. Break dates are stored as 1-based sample indices;
break fractions ``k / T`` are derived on demand.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from jointbreaks.errors import InvalidArgumentError

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class MultiSeries:
    """An ``n x T`` panel of observations sharing a common time index.

    Parameters
    ----------
    values : array_like
        Observations, one row per series.
    labels : sequence of str, optional
        Series names. Defaults to ``y1, y2, ...``.
    start_period : int
        Calendar label of the first observation (e.g. 1900).
    """

    values: NDArray[np.float64]
    labels: tuple[str, ...] = ()
    start_period: int = 1

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float, ndmin=2, copy=True)
        if values.ndim != 2:
            raise InvalidArgumentError("values must be a 2-d array (n x T)")
        n, T = values.shape
        if n < 1 or T < 5:
            raise InvalidArgumentError(f"need n >= 1 and T >= 5, got n={n}, T={T}")
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("values contain missing or non-finite entries")
        labels = tuple(self.labels) if self.labels else tuple(f"y{i + 1}" for i in range(n))
        if len(labels) != n:
            raise InvalidArgumentError(f"{len(labels)} labels given for {n} series")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "start_period", int(self.start_period))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @property
    def periods(self) -> NDArray[np.int64]:
        """Calendar labels of the observations."""
        return np.arange(self.start_period, self.start_period + self.T)

    def with_values(self, values: ArrayLike) -> MultiSeries:
        """Copy with new observations but the same labels and time index."""
        return MultiSeries(np.asarray(values, dtype=float), self.labels, self.start_period)

    def select(self, rows: Sequence[int]) -> MultiSeries:
        rows = list(rows)
        return MultiSeries(self.values[rows], tuple(self.labels[i] for i in rows), self.start_period)

    def date_to_period(self, k: int) -> int:
        """Calendar label of 1-based sample index ``k``."""
        return self.start_period + int(k) - 1


@dataclass(frozen=True)
class BreakVector:
    """Break dates for every equation of a system.

    ``per_equation[i]`` holds the strictly increasing, 1-based break dates
    of equation ``i`` (possibly empty).
    """

    per_equation: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        eqs = tuple(tuple(int(k) for k in ks) for ks in self.per_equation)
        for i, ks in enumerate(eqs):
            if any(b <= a for a, b in zip(ks, ks[1:])):
                raise InvalidArgumentError(f"break dates of equation {i} not strictly increasing: {ks}")
        object.__setattr__(self, "per_equation", eqs)

    @classmethod
    def from_stacked(cls, stacked: ArrayLike, counts: Sequence[int]) -> BreakVector:
        stacked = [int(v) for v in np.asarray(stacked).ravel()]
        if len(stacked) != sum(counts):
            raise InvalidArgumentError("stacked break vector does not match counts")
        out, pos = [], 0
        for c in counts:
            out.append(tuple(stacked[pos:pos + c]))
            pos += c
        return cls(tuple(out))

    @property
    def n(self) -> int:
        return len(self.per_equation)

    @property
    def counts(self) -> tuple[int, ...]:
        return tuple(len(ks) for ks in self.per_equation)

    @property
    def m(self) -> int:
        return sum(self.counts)

    def stacked(self) -> NDArray[np.int64]:
        return np.array([k for ks in self.per_equation for k in ks], dtype=np.int64)

    def fractions(self, T: int) -> list[NDArray[np.float64]]:
        return [np.asarray(ks, dtype=float) / T for ks in self.per_equation]

    def validate(self, T: int) -> None:
        """Raise unless every date lies in the admissible range ``[2, T - 2]``."""
        for i, ks in enumerate(self.per_equation):
            for k in ks:
                if not 2 <= k <= T - 2:
                    raise InvalidArgumentError(
                        f"break date {k} of equation {i} outside admissible range [2, {T - 2}]")


@dataclass(frozen=True)
class EquationParams:
    """Trend coefficients of one equation: intercept, slope, slope changes."""

    mu: float
    beta: float
    delta: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "delta", np.asarray(self.delta, dtype=float).ravel())

    @classmethod
    def from_vector(cls, theta: ArrayLike) -> EquationParams:
        theta = np.asarray(theta, dtype=float).ravel()
        return cls(theta[0], theta[1], theta[2:])

    def as_vector(self) -> NDArray[np.float64]:
        return np.concatenate([[self.mu, self.beta], self.delta])


@dataclass(frozen=True)
class SystemFit:
    """Estimated system at given break dates.

    Attributes
    ----------
    breaks : BreakVector
        Break dates the regressors were built from.
    params : tuple of EquationParams
        Per-equation trend coefficients.
    sigma : ndarray
        ``T^{-1} U'U`` for the residual matrix ``U``.
    residuals : ndarray
        ``n x T`` residuals.
    loglik : float
        Concentrated Gaussian log-likelihood
        ``-(nT/2)(log 2pi + 1) - (T/2) log det sigma``.
    iterations : int
        Number of covariance updates performed.
    """

    breaks: BreakVector
    params: tuple[EquationParams, ...]
    sigma: NDArray[np.float64]
    residuals: NDArray[np.float64]
    loglik: float
    iterations: int = 1
    converged: bool = True

    @property
    def n(self) -> int:
        return self.residuals.shape[0]

    @property
    def T(self) -> int:
        return self.residuals.shape[1]

    @property
    def logdet(self) -> float:
        n, T = self.residuals.shape
        return -2.0 * (self.loglik + 0.5 * n * T * (LOG_2PI + 1.0)) / T

    def fitted(self) -> NDArray[np.float64]:
        """Estimated trend functions, ``n x T``."""
        return np.vstack([evaluate_trend(p, ks, self.T)
                          for p, ks in zip(self.params, self.breaks.per_equation)])

    def deltas(self) -> list[NDArray[np.float64]]:
        return [p.delta for p in self.params]


def concentrated_loglik(logdet: float, n: int, T: int) -> float:
    return -0.5 * n * T * (LOG_2PI + 1.0) - 0.5 * T * logdet


def slope_basis(T: int, k: int) -> NDArray[np.float64]:
    """Return ``b_t(k) = max(t - k, 0)`` for ``t = 1..T``."""
    if not 1 <= k <= T:
        raise InvalidArgumentError(f"break date k={k} outside [1, {T}]")
    return np.maximum(np.arange(1, T + 1) - k, 0).astype(float)


def build_regressors(T: int, k_i: Sequence[int]) -> NDArray[np.float64]:
    """Regressor matrix ``[1, t, b(k_i1), ..., b(k_im)]`` of one equation.

    Any strictly increasing dates giving full column rank are accepted
    (``k = 1`` and ``k = T`` do not); the searches restrict dates further
    to ``[2, T - 2]``.
    """
    ks = [int(k) for k in k_i]
    if any(b <= a for a, b in zip(ks, ks[1:])):
        raise InvalidArgumentError(f"break dates must be strictly increasing, got {ks}")
    for k in ks:
        if not 1 <= k <= T:
            raise InvalidArgumentError(f"break date {k} outside 1..{T}")
    X = np.empty((T, 2 + len(ks)))
    X[:, 0] = 1.0
    X[:, 1] = np.arange(1, T + 1)
    for j, k in enumerate(ks):
        X[:, 2 + j] = slope_basis(T, k)
    if np.linalg.matrix_rank(X) < X.shape[1]:
        raise InvalidArgumentError(f"regressors for breaks {ks} are rank deficient (T={T})")
    return X


def evaluate_trend(params: EquationParams, k_i: Sequence[int], T: int) -> NDArray[np.float64]:
    """Evaluate ``mu + beta t + sum_j delta_j b_t(k_j)`` over ``t = 1..T``."""
    if len(params.delta) != len(k_i):
        raise InvalidArgumentError(
            f"{len(params.delta)} slope changes given for {len(k_i)} break dates")
    t = np.arange(1, T + 1, dtype=float)
    out = params.mu + params.beta * t
    for d, k in zip(params.delta, k_i):
        out = out + d * slope_basis(T, int(k))
    return out
