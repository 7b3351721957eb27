"""Break-date estimation by exhaustive grid search.

Two estimators are provided:

* equation-by-equation least squares (``ols_break_search``), and
* full-system feasible GLS (``system_break_search``) minimising
  ``log det Sigma_hat(k)`` over a product grid of break dates, optionally
  subject to linear restrictions on the break fractions.

Regressors are global functions of the break dates, so dynamic programming
does not apply and every admissible date tuple is visited. Two devices keep
that affordable:

1. Constant and trend are common to every equation, so they are partialled
   out once (Frisch-Waugh-Lovell also holds for SUR/GLS with a Kronecker
   weight). Only the slope-change columns enter the per-candidate solves.
2. Iterated FGLS lowers ``log det`` at every step, so any iterate bounds the
   converged value from above; OLS on the union of all candidate columns,
   common to every equation, bounds it from below. Candidates whose lower
   bound exceeds the best upper bound cannot be the minimiser and are never
   iterated. The result is identical to a full scan.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

from jointbreaks.errors import InvalidArgumentError, NumericalFailureError
from jointbreaks.trend_model import (
    BreakVector,
    EquationParams,
    MultiSeries,
    SystemFit,
    build_regressors,
    concentrated_loglik,
)

_CHUNK = 40_000
# Candidates whose smallest residual-covariance eigenvalue falls below this
# fraction of the data scale are treated as exact fits.
_DEGENERATE_REL = 1e-11
_EIG_FLOOR_REL = 1e-15


def round_half_up(x: float) -> int:
    """Round to the nearest integer, halves upward (tolerant of float noise)."""
    return int(math.floor(x + 0.5 + 1e-9))


@dataclass(frozen=True)
class SearchConfig:
    """Grid and FGLS settings.

    Parameters
    ----------
    trim_fraction : float
        Break dates are confined to ``[ceil(trim*T), T - ceil(trim*T)]``
        (intersected with ``[2, T - 2]``).
    min_separation : int, optional
        Minimum distance between consecutive breaks of one equation.
        Defaults to ``max(3, ceil(0.05 T))``.
    max_fgls_iter : int
        Maximum number of covariance updates; 1 means OLS residuals only.
    fgls_tol : float
        Iteration stops once ``log det Sigma`` changes by less than this.
    estimator : {"fgls", "ols"}
        ``"ols"`` replaces the system criterion by the total sum of squared
        residuals (equivalently, GLS with Sigma fixed at the identity).
    """

    trim_fraction: float = 0.05
    min_separation: int | None = None
    max_fgls_iter: int = 50
    fgls_tol: float = 1e-10
    estimator: str = "fgls"

    def __post_init__(self) -> None:
        if not 0.0 < self.trim_fraction < 0.5:
            raise InvalidArgumentError("trim_fraction must lie in (0, 0.5)")
        if self.min_separation is not None and self.min_separation < 2:
            raise InvalidArgumentError("min_separation must be >= 2")
        if self.max_fgls_iter < 1:
            raise InvalidArgumentError("max_fgls_iter must be >= 1")
        if self.estimator not in ("fgls", "ols"):
            raise InvalidArgumentError(f"unknown estimator {self.estimator!r}")

    def bounds(self, T: int) -> tuple[int, int]:
        if self.trim_fraction * T < 2 - 1e-9:
            raise InvalidArgumentError(
                f"trim_fraction*T = {self.trim_fraction * T:.3g} < 2; increase trim_fraction")
        edge = math.ceil(self.trim_fraction * T - 1e-9)
        return max(2, edge), min(T - 2, T - edge)

    def separation(self, T: int) -> int:
        if self.min_separation is not None:
            return int(self.min_separation)
        return max(3, math.ceil(0.05 * T - 1e-9))


@dataclass(frozen=True)
class RestrictionSet:
    """Linear restrictions ``R lambda = r`` on the stacked break fractions.

    Only restrictions whose rows pin one fraction (``lambda_a = c``) or fix
    the distance between two (``lambda_a - lambda_b = c``, common breaks
    when ``c = 0``) are supported; they are imposed by substitution on the
    integer date grid with ``c*T`` rounded half up.
    """

    kind: str
    m: int
    R: NDArray[np.float64]
    r: NDArray[np.float64]
    fixed: tuple[tuple[int, float], ...] = ()
    offsets: tuple[tuple[int, int, float], ...] = ()
    groups: tuple[tuple[int, ...], ...] = field(default=())

    @property
    def q(self) -> int:
        return int(np.linalg.matrix_rank(self.R)) if self.R.size else 0

    @classmethod
    def none(cls, m: int) -> RestrictionSet:
        return cls("none", m, np.zeros((0, m)), np.zeros(0))

    @classmethod
    def fixed_dates(cls, fractions: Sequence[float], positions: Sequence[int] | None = None,
                    m: int | None = None) -> RestrictionSet:
        fractions = [float(c) for c in fractions]
        positions = list(range(len(fractions))) if positions is None else [int(p) for p in positions]
        m = len(fractions) if m is None else m
        if len(positions) != len(fractions):
            raise InvalidArgumentError("positions and fractions differ in length")
        R = np.zeros((len(positions), m))
        for row, p in enumerate(positions):
            R[row, p] = 1.0
        return cls._checked("fixed_dates", m, R, np.array(fractions),
                            fixed=tuple(zip(positions, fractions)))

    @classmethod
    def common(cls, groups: Sequence[Sequence[int]], m: int) -> RestrictionSet:
        rows, offsets = [], []
        for g in groups:
            g = [int(p) for p in g]
            for p in g[1:]:
                row = np.zeros(m)
                row[g[0]], row[p] = 1.0, -1.0
                rows.append(row)
                offsets.append((g[0], p, 0.0))
        R = np.array(rows).reshape(-1, m)
        return cls._checked("common_groups", m, R, np.zeros(len(rows)), offsets=tuple(offsets),
                            groups=tuple(tuple(int(p) for p in g) for g in groups))

    @classmethod
    def fixed_offsets(cls, pairs: Sequence[tuple[int, int, float]], m: int) -> RestrictionSet:
        rows, rhs = [], []
        for a, b, c in pairs:
            row = np.zeros(m)
            row[a], row[b] = 1.0, -1.0
            rows.append(row)
            rhs.append(float(c))
        return cls._checked("fixed_offsets", m, np.array(rows).reshape(-1, m), np.array(rhs),
                            offsets=tuple((int(a), int(b), float(c)) for a, b, c in pairs))

    @classmethod
    def from_matrix(cls, R: ArrayLike, r: ArrayLike) -> RestrictionSet:
        """Parse a general ``(R, r)`` pair into the supported row types."""
        R = np.atleast_2d(np.asarray(R, dtype=float))
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if R.shape[0] != r.shape[0]:
            raise InvalidArgumentError("R and r have inconsistent shapes")
        fixed, offsets = [], []
        for row, c in zip(R, r):
            nz = np.flatnonzero(row)
            vals = row[nz]
            if len(nz) == 1 and abs(abs(vals[0]) - 1) < 1e-12:
                fixed.append((int(nz[0]), float(c * vals[0])))
            elif len(nz) == 2 and abs(vals[0] + vals[1]) < 1e-12 and abs(abs(vals[0]) - 1) < 1e-12:
                a, b = (int(nz[0]), int(nz[1])) if vals[0] > 0 else (int(nz[1]), int(nz[0]))
                offsets.append((a, b, float(c)))
            else:
                raise InvalidArgumentError(
                    "only rows pinning one fraction or differencing two fractions are supported")
        if fixed and not offsets:
            kind = "fixed_dates"
        elif offsets and not fixed:
            kind = "common_groups" if all(c == 0 for *_, c in offsets) else "fixed_offsets"
        else:
            kind = "mixed"
        return cls._checked(kind, R.shape[1], R, r, fixed=tuple(fixed), offsets=tuple(offsets))

    @classmethod
    def _checked(cls, kind, m, R, r, **kw) -> RestrictionSet:
        if R.shape[0] and np.linalg.matrix_rank(R) != R.shape[0]:
            raise InvalidArgumentError("restriction matrix R must have full row rank")
        for p in [p for p, _ in kw.get("fixed", ())] + [x for a, b, _ in kw.get("offsets", ()) for x in (a, b)]:
            if not 0 <= p < m:
                raise InvalidArgumentError(f"break position {p} outside 0..{m - 1}")
        return cls(kind, m, R, r, **kw)


def common_break_restriction(counts: Sequence[int]) -> RestrictionSet:
    """All equations share their j-th break (equations need equal counts)."""
    counts = list(counts)
    active = [i for i, c in enumerate(counts) if c > 0]
    if len(active) < 2 or len({counts[i] for i in active}) != 1:
        raise InvalidArgumentError("common breaks need >= 2 equations with equal break counts")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    groups = [[int(starts[i]) + j for i in active] for j in range(counts[active[0]])]
    return RestrictionSet.common(groups, sum(counts))


# ---------------------------------------------------------------------------
# residualised design
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def _trend_basis(T: int) -> tuple[NDArray, NDArray, NDArray]:
    """Orthonormal trend basis, trend-residualised slope columns and their Gram matrix.

    Column ``k - 1`` of the slope block is ``M b(k)`` with ``M`` the
    projection off ``[1, t]``.
    """
    t = np.arange(1, T + 1, dtype=float)
    Q, _ = np.linalg.qr(np.column_stack([np.ones(T), t]))
    B = np.maximum(t[:, None] - t[None, :], 0.0)
    B -= Q @ (Q.T @ B)
    G = B.T @ B
    for a in (Q, B, G):
        a.flags.writeable = False
    return Q, B, G


def _sym_eigvals(S: NDArray) -> NDArray:
    """Ascending eigenvalues of a stack of symmetric matrices (closed form for 2 x 2)."""
    if S.shape[-1] == 2:
        a, b, c = S[..., 0, 0], S[..., 0, 1], S[..., 1, 1]
        mid = 0.5 * (a + c)
        rad = np.hypot(0.5 * (a - c), b)
        return np.stack([mid - rad, mid + rad], axis=-1)
    if S.shape[-1] == 1:
        return S[..., 0]
    return np.linalg.eigvalsh(S)


class _Design:
    """Moments of one data set against the residualised slope dictionary."""

    def __init__(self, values: NDArray[np.float64]):
        values = np.atleast_2d(values)
        self.n, self.T = values.shape
        Q, B, self.gram = _trend_basis(self.T)
        Yt = values.T - Q @ (Q.T @ values.T)
        self.cross = B.T @ Yt
        self.yy = Yt.T @ Yt
        self.scale = max(float(np.max(np.diag(self.yy))) / self.T, 1e-300)

    def logdet(self, S: NDArray) -> tuple[NDArray, NDArray]:
        eig = _sym_eigvals(S)
        degenerate = eig[..., 0] <= _DEGENERATE_REL * self.scale
        return np.log(np.maximum(eig, _EIG_FLOOR_REL * self.scale)).sum(-1), degenerate


def _gls_values(design: _Design, cols: Sequence[NDArray], max_iter: int, tol: float,
                estimator: str = "fgls") -> tuple[NDArray, NDArray]:
    """Criterion value for each candidate column set.

    ``cols[i]`` is a ``(C, p_i)`` integer array of dictionary columns for
    equation ``i``. Returns ``(values, iterations)`` where values are
    ``log det Sigma_hat`` after FGLS from an OLS start (or total SSR when
    ``estimator == "ols"``).
    """
    n, T = design.n, design.T
    C = cols[0].shape[0]
    p = [c.shape[1] for c in cols]
    P = sum(p)
    if P == 0:
        S = np.broadcast_to(design.yy / T, (C, n, n))
        if estimator == "ols":
            return np.full(C, np.trace(design.yy)), np.ones(C, dtype=int)
        return design.logdet(S)[0], np.ones(C, dtype=int)
    eq = np.repeat(np.arange(n), p)
    allc = np.concatenate(cols, axis=1)
    XtX = design.gram[allc[:, :, None], allc[:, None, :]]
    Xty = design.cross[allc]
    E = (eq[:, None] == np.arange(n)[None, :]).astype(float)
    same = (eq[:, None] == eq[None, :]).astype(float)
    yy = design.yy

    def sigma(theta, XtX, Xty):
        thE = theta[:, :, None] * E
        thE_t = thE.transpose(0, 2, 1)
        t1 = thE_t @ Xty
        return (yy - t1 - t1.transpose(0, 2, 1) + thE_t @ (XtX @ thE)) / T

    theta = np.linalg.solve(XtX * same, Xty[:, np.arange(P), eq][..., None])[..., 0]
    S = sigma(theta, XtX, Xty)
    if estimator == "ols":
        return np.trace(S, axis1=1, axis2=2) * T, np.ones(C, dtype=int)
    values, degenerate = design.logdet(S)
    iters = np.ones(C, dtype=int)
    if n == 1 or max_iter <= 1:
        return values, iters

    act = np.flatnonzero(~degenerate)
    XtX_a, Xty_a, S_a, prev = XtX[act], Xty[act], S[act], values[act]
    for it in range(2, max_iter + 1):
        if act.size == 0:
            break
        W = np.linalg.inv(S_a)
        A = XtX_a * W[:, eq[:, None], eq[None, :]]
        b = (W[:, eq, :] * Xty_a).sum(-1)
        theta = np.linalg.solve(A, b[..., None])[..., 0]
        S_a = sigma(theta, XtX_a, Xty_a)
        ld, degen = design.logdet(S_a)
        values[act] = ld
        iters[act] = it
        keep = ~((np.abs(ld - prev) < tol) | degen)
        act, XtX_a, Xty_a, S_a, prev = act[keep], XtX_a[keep], Xty_a[keep], S_a[keep], ld[keep]
    return values, iters


def _union_lower_bound(design: _Design, allc: NDArray) -> NDArray:
    """``log det`` of OLS residuals when every equation uses all columns."""
    T = design.T
    s = np.sort(allc, axis=1)
    dup = np.zeros_like(s, dtype=bool)
    dup[:, 1:] = s[:, 1:] == s[:, :-1]
    keep = (~dup).astype(float)
    XtX = design.gram[s[:, :, None], s[:, None, :]] * keep[:, :, None] * keep[:, None, :]
    XtX[:, np.arange(s.shape[1]), np.arange(s.shape[1])] += dup
    Xty = design.cross[s] * keep[:, :, None]
    coef = np.linalg.solve(XtX, Xty)
    S = (design.yy - Xty.transpose(0, 2, 1) @ coef) / T
    return design.logdet(S)[0]


def _split_cols(dates: NDArray, counts: Sequence[int]) -> list[NDArray]:
    bounds = np.concatenate([[0], np.cumsum(counts)])
    return [dates[:, bounds[i]:bounds[i + 1]] - 1 for i in range(len(counts))]


# ---------------------------------------------------------------------------
# candidate grids
# ---------------------------------------------------------------------------

def equation_grid(T: int, m_i: int, cfg: SearchConfig) -> NDArray[np.int64]:
    """All admissible date tuples of one equation, lexicographically ordered."""
    if m_i == 0:
        return np.zeros((1, 0), dtype=np.int64)
    lo, hi = cfg.bounds(T)
    sep = cfg.separation(T)
    rows = [c for c in itertools.combinations(range(lo, hi + 1), m_i)
            if all(b - a >= sep for a, b in zip(c, c[1:]))]
    if not rows:
        raise InvalidArgumentError(f"no admissible placement of {m_i} breaks for T={T}")
    return np.array(rows, dtype=np.int64)


def _product_chunks(grids: Sequence[NDArray], chunk: int = _CHUNK) -> Iterator[NDArray]:
    sizes = [g.shape[0] for g in grids]
    total = int(np.prod(sizes))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, sizes)
        yield np.concatenate([g[i] for g, i in zip(grids, idx)], axis=1)


def _admissible(dates: NDArray, counts: Sequence[int], lo: int, hi: int, sep: int) -> NDArray:
    ok = np.all((dates >= lo) & (dates <= hi), axis=1)
    pos = 0
    for c in counts:
        if c > 1:
            gaps = np.diff(dates[:, pos:pos + c], axis=1)
            ok &= np.all(gaps >= sep, axis=1)
        pos += c
    return ok


def _date_structure(restriction: RestrictionSet, T: int) -> tuple[list[int], list[int], dict[int, int]]:
    """Reduce a restriction to ``date[p] = date[root[p]] + offset[p]`` plus pinned roots."""
    m = restriction.m
    parent = list(range(m))
    rel = [0] * m

    def find(p):
        o = 0
        while parent[p] != p:
            o += rel[p]
            p = parent[p]
        return p, o

    infeasible = InvalidArgumentError("restriction is infeasible on the integer date grid")
    for a, b, c in restriction.offsets:
        d = round_half_up(c * T)
        ra, oa = find(a)
        rb, ob = find(b)
        if ra == rb:
            if oa - ob != d:
                raise infeasible
            continue
        x = oa - ob - d  # date[rb] = date[ra] + x
        if ra < rb:
            parent[rb], rel[rb] = ra, x
        else:
            parent[ra], rel[ra] = rb, -x
    pinned: dict[int, int] = {}
    for p, c in restriction.fixed:
        rp, op = find(p)
        v = round_half_up(c * T) - op
        if pinned.get(rp, v) != v:
            raise infeasible
        pinned[rp] = v
    roots, offsets = zip(*(find(p) for p in range(m))) if m else ((), ())
    return list(roots), list(offsets), pinned


def candidate_chunks(T: int, counts: Sequence[int], restriction: RestrictionSet | None,
                     cfg: SearchConfig, chunk: int = _CHUNK) -> Iterator[NDArray]:
    """Yield admissible stacked date tuples (lexicographic order) in chunks."""
    counts = list(counts)
    m = sum(counts)
    if restriction is not None and restriction.m != m:
        raise InvalidArgumentError(f"restriction is for {restriction.m} breaks, system has {m}")
    if restriction is None or restriction.kind == "none":
        yield from _product_chunks([equation_grid(T, c, cfg) for c in counts], chunk)
        return
    lo, hi = cfg.bounds(T)
    sep = cfg.separation(T)
    roots, offsets, pinned = _date_structure(restriction, T)
    free = sorted({r for r in roots if r not in pinned})
    ranges = []
    for f in free:
        offs = [o for r, o in zip(roots, offsets) if r == f]
        ranges.append(np.arange(lo - min(offs), hi - max(offs) + 1))
    root_pos = {f: j for j, f in enumerate(free)}
    base = np.array([pinned.get(r, 0) + o for r, o in zip(roots, offsets)], dtype=np.int64)
    pick = np.array([root_pos.get(r, -1) for r in roots])
    sizes = [len(rg) for rg in ranges]
    total = int(np.prod(sizes)) if sizes else 1
    found = False
    for start in range(0, total, chunk):
        flat = np.arange(start, min(start + chunk, total))
        idx = np.unravel_index(flat, sizes) if sizes else ()
        rootvals = np.column_stack([rg[i] for rg, i in zip(ranges, idx)]) if sizes \
            else np.zeros((1, 0), dtype=np.int64)
        dates = np.tile(base, (rootvals.shape[0], 1))
        for p in range(m):
            if pick[p] >= 0:
                dates[:, p] += rootvals[:, pick[p]]
        dates = dates[_admissible(dates, counts, lo, hi, sep)]
        if dates.shape[0]:
            found = True
            yield dates
    if not found:
        raise InvalidArgumentError("restriction is infeasible on the admissible date grid")


# ---------------------------------------------------------------------------
# search driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class _SearchOutcome:
    dates: NDArray[np.int64]
    value: float
    n_candidates: int
    n_iterated: int


def _grid_minimum(design: _Design, chunks: Iterator[NDArray], counts: Sequence[int],
                  cfg: SearchConfig) -> _SearchOutcome:
    """Exact minimiser of the system criterion over the candidate chunks."""
    exact_one_step = cfg.estimator == "ols" or design.n == 1 or cfg.max_fgls_iter <= 1 or sum(counts) == 0
    kept_dates, kept_lower = [], []
    best_upper = np.inf
    total = 0
    for dates in chunks:
        total += dates.shape[0]
        cols = _split_cols(dates, counts)
        upper, _ = _gls_values(design, cols, 1, cfg.fgls_tol, cfg.estimator)
        if exact_one_step:
            lower = upper
        else:
            # the bound never exceeds the candidate's own value; clamp away cancellation error
            lower = np.minimum(_union_lower_bound(design, np.concatenate(cols, axis=1)), upper)
        best_upper = min(best_upper, float(upper.min()))
        keep = lower <= best_upper + 1e-9 * (1.0 + abs(best_upper))
        kept_dates.append(dates[keep])
        kept_lower.append(lower[keep])
    if total == 0:
        raise InvalidArgumentError("empty admissible grid")
    dates = np.concatenate(kept_dates)
    lower = np.concatenate(kept_lower)
    dates = dates[lower <= best_upper + 1e-9 * (1.0 + abs(best_upper))]
    if exact_one_step:
        values, _ = _gls_values(design, _split_cols(dates, counts), 1, cfg.fgls_tol, cfg.estimator)
    else:
        values, _ = _gls_values(design, _split_cols(dates, counts), cfg.max_fgls_iter,
                                cfg.fgls_tol, cfg.estimator)
    best = values.min()
    ties = np.flatnonzero(values == best)
    if ties.size > 1:
        order = np.lexsort(dates[ties].T[::-1])
        i = ties[order[0]]
    else:
        i = ties[0]
    return _SearchOutcome(dates[i], float(best), total, int(dates.shape[0]))


# ---------------------------------------------------------------------------
# public estimators
# ---------------------------------------------------------------------------

def ols_fit_single(y_i: ArrayLike, k_i: Sequence[int]) -> tuple[EquationParams, float, NDArray]:
    """Least-squares fit of one joined segmented trend at given break dates.

    Returns
    -------
    params : EquationParams
    ssr : float
        Sum of squared residuals.
    residuals : ndarray
    """
    y_i = np.asarray(y_i, dtype=float).ravel()
    X = build_regressors(len(y_i), k_i)
    theta, _, rank, _ = np.linalg.lstsq(X, y_i, rcond=None)
    if rank < X.shape[1]:
        raise NumericalFailureError(f"singular normal equations at breaks {tuple(k_i)}")
    resid = y_i - X @ theta
    return EquationParams.from_vector(theta), float(resid @ resid), resid


def ols_break_search(y_i: ArrayLike, m_i: int, cfg: SearchConfig | None = None) -> tuple[tuple[int, ...], float]:
    """Break dates minimising the SSR of a single equation.

    Ties are resolved towards the lexicographically earliest date tuple.
    """
    cfg = cfg or SearchConfig()
    y_i = np.asarray(y_i, dtype=float).ravel()
    design = _Design(y_i[None, :])
    ols_cfg = SearchConfig(cfg.trim_fraction, cfg.min_separation, 1, cfg.fgls_tol, "ols")
    out = _grid_minimum(design, _product_chunks([equation_grid(len(y_i), m_i, cfg)]), [m_i], ols_cfg)
    k_hat = tuple(int(k) for k in out.dates)
    _, ssr, _ = ols_fit_single(y_i, k_hat)
    return k_hat, ssr


def _data_scale(Y: NDArray) -> float:
    return _Design(Y).scale


def ols_system_fit(y: MultiSeries, k: BreakVector) -> SystemFit:
    """Equation-by-equation OLS packaged as a system fit."""
    if k.n != y.n:
        raise InvalidArgumentError(f"break vector has {k.n} equations, data has {y.n}")
    params, resid = [], []
    for yi, ks in zip(y.values, k.per_equation):
        p, _, u = ols_fit_single(yi, ks)
        params.append(p)
        resid.append(u)
    U = np.vstack(resid)
    S = U @ U.T / y.T
    ld = _floored_logdet(S, _data_scale(y.values))
    return SystemFit(k, tuple(params), S, U, concentrated_loglik(ld, y.n, y.T), 1, True)


def _floored_logdet(S: NDArray, scale: float) -> float:
    eig = np.linalg.eigvalsh(S)
    return float(np.log(np.maximum(eig, _EIG_FLOOR_REL * scale)).sum())


def fgls_fit(y: MultiSeries, k: BreakVector, cfg: SearchConfig | None = None,
             allow_singular: bool = False) -> SystemFit:
    """Iterated feasible GLS (SUR) fit at fixed break dates.

    Starts from equation-by-equation OLS and alternates
    ``theta = [X'(S^-1 (x) I)X]^-1 X'(S^-1 (x) I)y`` with ``S = U'U/T``
    until ``log det S`` moves by less than ``cfg.fgls_tol``.

    Raises
    ------
    NumericalFailureError
        If the residual covariance is singular (perfectly collinear
        residuals), unless ``allow_singular`` is set, in which case the
        OLS fit is returned with a floored log-determinant.
    """
    cfg = cfg or SearchConfig()
    if k.n != y.n:
        raise InvalidArgumentError(f"break vector has {k.n} equations, data has {y.n}")
    n, T = y.n, y.T
    Y = y.values
    Xs = [build_regressors(T, ks) for ks in k.per_equation]
    scale = _data_scale(Y)
    thetas = [np.linalg.lstsq(X, yi, rcond=None)[0] for X, yi in zip(Xs, Y)]
    U = np.vstack([yi - X @ th for X, yi, th in zip(Xs, Y, thetas)])
    S = U @ U.T / T
    eig = np.linalg.eigvalsh(S)
    if eig[0] <= _DEGENERATE_REL * scale:
        if not allow_singular:
            raise NumericalFailureError(
                "residual covariance is singular (collinear or zero residuals); "
                f"smallest eigenvalue {eig[0]:.3g}")
        ld = _floored_logdet(S, scale)
        params = tuple(EquationParams.from_vector(th) for th in thetas)
        return SystemFit(k, params, S, U, concentrated_loglik(ld, n, T), 1, True)
    ld = float(np.log(eig).sum())
    iterations, converged = 1, n == 1
    if cfg.estimator == "fgls" and n > 1:
        sizes = [X.shape[1] for X in Xs]
        offs = np.concatenate([[0], np.cumsum(sizes)])
        XX = [[Xi.T @ Xj for Xj in Xs] for Xi in Xs]
        XY = [[Xi.T @ yj for yj in Y] for Xi in Xs]
        for it in range(2, cfg.max_fgls_iter + 1):
            W = np.linalg.inv(S)
            A = np.zeros((offs[-1], offs[-1]))
            b = np.zeros(offs[-1])
            for i in range(n):
                for j in range(n):
                    A[offs[i]:offs[i + 1], offs[j]:offs[j + 1]] = W[i, j] * XX[i][j]
                    b[offs[i]:offs[i + 1]] += W[i, j] * XY[i][j]
            theta = np.linalg.solve(A, b)
            thetas = [theta[offs[i]:offs[i + 1]] for i in range(n)]
            U = np.vstack([yi - X @ th for X, yi, th in zip(Xs, Y, thetas)])
            S = U @ U.T / T
            eig = np.linalg.eigvalsh(S)
            if eig[0] <= _DEGENERATE_REL * scale:
                raise NumericalFailureError("residual covariance became singular during FGLS")
            new = float(np.log(eig).sum())
            iterations = it
            if abs(new - ld) < cfg.fgls_tol:
                ld, converged = new, True
                break
            ld = new
    params = tuple(EquationParams.from_vector(th) for th in thetas)
    return SystemFit(k, params, S, U, concentrated_loglik(ld, n, T), iterations, converged)


def system_break_search(y: MultiSeries, m: Sequence[int], restriction: RestrictionSet | None = None,
                        cfg: SearchConfig | None = None) -> tuple[BreakVector, SystemFit]:
    """Break dates minimising ``log det Sigma_hat(k)`` over the (restricted) grid.

    Parameters
    ----------
    y : MultiSeries
    m : sequence of int
        Number of breaks in each equation.
    restriction : RestrictionSet, optional
        Linear restrictions on the break fractions; ``None`` searches the
        full product grid.
    cfg : SearchConfig, optional

    Returns
    -------
    k_hat : BreakVector
    fit : SystemFit
        Fit at ``k_hat`` (FGLS, or equation-by-equation OLS when
        ``cfg.estimator == "ols"``).
    """
    cfg = cfg or SearchConfig()
    counts = [int(c) for c in m]
    if len(counts) != y.n:
        raise InvalidArgumentError(f"{len(counts)} break counts for {y.n} equations")
    out = _search(y, counts, restriction, cfg)
    k_hat = BreakVector.from_stacked(out.dates, counts)
    if cfg.estimator == "ols":
        return k_hat, ols_system_fit(y, k_hat)
    return k_hat, fgls_fit(y, k_hat, cfg, allow_singular=True)


def _search(y: MultiSeries, counts: Sequence[int], restriction: RestrictionSet | None,
            cfg: SearchConfig, design: _Design | None = None) -> _SearchOutcome:
    design = design or _Design(y.values)
    return _grid_minimum(design, candidate_chunks(y.T, counts, restriction, cfg), counts, cfg)
