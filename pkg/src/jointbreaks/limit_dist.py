"""Closed-form asymptotic covariances of estimated break fractions.

All moment integrals are over ``r`` in ``[0, 1]`` and involve the functions

* ``f_i(r) = (1, r, (r - l_i1)^+, ..., (r - l_im)^+)``,
* ``g_i(r) = (1(r > l_i1), ..., 1(r > l_im))``,
* ``b(r, v) = (r - v)^+``,

whose pairwise products are piecewise polynomials of degree at most 3, so
every integral has an exact closed form.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from jointbreaks.errors import NumericalFailureError

# ---------------------------------------------------------------------------
# primitive integrals
# ---------------------------------------------------------------------------


def int_ramp(a: float) -> float:
    """``int (r - a)^+ dr``."""
    return 0.5 * (1.0 - a) ** 2


def int_r_ramp(a: float) -> float:
    """``int r (r - a)^+ dr``."""
    return 1.0 / 3.0 - 0.5 * a + a**3 / 6.0


def int_ramp_ramp(a: float, b: float) -> float:
    """``int (r - a)^+ (r - b)^+ dr``."""
    c = max(a, b)

    def F(r):
        return r**3 / 3.0 - 0.5 * (a + b) * r**2 + a * b * r

    return F(1.0) - F(c)


def int_r_step(a: float) -> float:
    """``int r 1(r > a) dr``."""
    return 0.5 * (1.0 - a**2)


def int_step_step(a: float, b: float) -> float:
    """``int 1(r > a) 1(r > b) dr``."""
    return 1.0 - max(a, b)


def int_ramp_step(a: float, b: float) -> float:
    """``int (r - a)^+ 1(r > b) dr``."""
    c = max(a, b)
    return 0.5 * ((1.0 - a) ** 2 - (c - a) ** 2)


def int_ramp_sq(v: float) -> float:
    """``int ((r - v)^+)^2 dr``."""
    return (1.0 - v) ** 3 / 3.0


def scalar_moments(a: float, b: float) -> dict[str, float]:
    """All primitive integrals at fractions ``(a, b)``."""
    return {
        "ramp": int_ramp(a),
        "r_ramp": int_r_ramp(a),
        "ramp_ramp": int_ramp_ramp(a, b),
        "r_step": int_r_step(a),
        "step_step": int_step_step(a, b),
        "ramp_step": int_ramp_step(a, b),
        "ramp_sq": int_ramp_sq(a),
    }


# Basis functions are tagged ("one" | "r" | "ramp" | "step", fraction).
_Basis = tuple[str, float]


def _pair(u: _Basis, v: _Basis) -> float:
    (tu, a), (tv, b) = u, v
    order = {"one": 0, "r": 1, "ramp": 2, "step": 3}
    if order[tu] > order[tv]:
        (tu, a), (tv, b) = (tv, b), (tu, a)
    if tu == "one":
        return {"one": 1.0, "r": 0.5, "ramp": int_ramp(b), "step": 1.0 - b}[tv]
    if tu == "r":
        return {"r": 1.0 / 3.0, "ramp": int_r_ramp(b), "step": int_r_step(b)}[tv]
    if tu == "ramp":
        return int_ramp_ramp(a, b) if tv == "ramp" else int_ramp_step(a, b)
    return int_step_step(a, b)


def _f_basis(fr: Sequence[float]) -> list[_Basis]:
    return [("one", 0.0), ("r", 0.0)] + [("ramp", float(x)) for x in fr]


def _g_basis(fr: Sequence[float]) -> list[_Basis]:
    return [("step", float(x)) for x in fr]


def _gram(us: list[_Basis], vs: list[_Basis]) -> NDArray[np.float64]:
    return np.array([[_pair(u, v) for v in vs] for u in us]).reshape(len(us), len(vs))


# ---------------------------------------------------------------------------
# moment blocks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MomentBlocks:
    """Pairwise moment matrices ``FF[i][j] = int f_i f_j'`` etc."""

    FF: list[list[NDArray[np.float64]]]
    FG: list[list[NDArray[np.float64]]]
    GF: list[list[NDArray[np.float64]]]
    GG: list[list[NDArray[np.float64]]]

    @property
    def n(self) -> int:
        return len(self.FF)


def _as_fraction_lists(fractions) -> list[NDArray[np.float64]]:
    return [np.atleast_1d(np.asarray(f, dtype=float)) for f in fractions]


def moment_blocks(fractions: Sequence[ArrayLike]) -> MomentBlocks:
    """Assemble all pairwise moment blocks for per-equation break fractions."""
    fr = _as_fraction_lists(fractions)
    fb = [_f_basis(x) for x in fr]
    gb = [_g_basis(x) for x in fr]
    n = len(fr)
    FF = [[_gram(fb[i], fb[j]) for j in range(n)] for i in range(n)]
    FG = [[_gram(fb[i], gb[j]) for j in range(n)] for i in range(n)]
    GF = [[FG[j][i].T for j in range(n)] for i in range(n)]
    GG = [[_gram(gb[i], gb[j]) for j in range(n)] for i in range(n)]
    return MomentBlocks(FF, FG, GF, GG)


def _weighted(blocks: list[list[NDArray]], W: NDArray) -> NDArray[np.float64]:
    n = len(blocks)
    return np.block([[W[i, j] * blocks[i][j] for j in range(n)] for i in range(n)])


def _delta_matrix(deltas: Sequence[ArrayLike]) -> NDArray[np.float64]:
    d = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)) for x in deltas]) \
        if len(deltas) else np.zeros(0)
    return np.diag(d)


def _inv(M: NDArray, what: str) -> NDArray:
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > 1e14:
        raise NumericalFailureError(f"{what} is singular (condition number {cond:.3g})")
    return np.linalg.inv(M)


# ---------------------------------------------------------------------------
# system (GLS) covariance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LimitCov:
    """Limit covariance of ``T^{3/2}(lambda_hat - lambda)`` for the system estimator.

    ``xi = xi1^{-1} xi0 xi1^{-1}``. The intermediate Q and Gamma matrices are
    kept for the additional-break kernels.
    """

    xi0: NDArray[np.float64]
    xi1: NDArray[np.float64]
    xi: NDArray[np.float64]
    d_delta: NDArray[np.float64]
    Q_FF: NDArray[np.float64]
    Q_GF: NDArray[np.float64]
    G_FF: NDArray[np.float64]
    G_GF: NDArray[np.float64]
    s: NDArray[np.float64]
    kappa: NDArray[np.float64]
    fractions: tuple[NDArray[np.float64], ...]


def assemble_limit_cov(fractions: Sequence[ArrayLike], deltas: Sequence[ArrayLike],
                       sigma: ArrayLike, psi: ArrayLike) -> LimitCov:
    """Limit covariance with short-run ``sigma`` and long-run ``psi`` covariances.

    Parameters
    ----------
    fractions, deltas : sequence of array_like
        Per-equation break fractions and slope changes.
    sigma, psi : array_like
        ``n x n`` positive definite matrices.
    """
    fr = _as_fraction_lists(fractions)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    s = _inv(sigma, "short-run covariance")
    kappa = s @ psi @ s
    mb = moment_blocks(fr)
    Q_FF, G_FF = _weighted(mb.FF, s), _weighted(mb.FF, kappa)
    Q_GF, G_GF = _weighted(mb.GF, s), _weighted(mb.GF, kappa)
    Q_GG, G_GG = _weighted(mb.GG, s), _weighted(mb.GG, kappa)
    Q_FG, G_FG = Q_GF.T, G_GF.T
    D = _delta_matrix(deltas)
    Qi = _inv(Q_FF, "Q_FF (degenerate break fractions)")
    A = Q_GF @ Qi
    xi0 = D @ (G_GG - G_GF @ Qi @ Q_FG - A @ G_FG + A @ G_FF @ Qi @ Q_FG) @ D
    xi1 = D @ (Q_GG - A @ Q_FG) @ D
    xi0 = 0.5 * (xi0 + xi0.T)
    xi1 = 0.5 * (xi1 + xi1.T)
    xi1_inv = _inv(xi1, "xi1 (zero slope change or coincident fractions)")
    xi = xi1_inv @ xi0 @ xi1_inv
    xi = 0.5 * (xi + xi.T)
    return LimitCov(xi0, xi1, xi, D, Q_FF, Q_GF, G_FF, G_GF, s, kappa, tuple(fr))


# ---------------------------------------------------------------------------
# equation-by-equation (OLS) covariance
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EquationLimitCov:
    """Limit covariance of break fractions estimated equation by equation."""

    xi_s: NDArray[np.float64]
    P: list[list[NDArray[np.float64]]]


def assemble_eq_limit_cov(fractions: Sequence[ArrayLike], deltas: Sequence[ArrayLike],
                          psi: ArrayLike) -> EquationLimitCov:
    """Covariance blocks ``psi_ij D_i^{-1} P_ij D_j^{-1}`` of per-equation estimates.

    ``P_ij = (int p_i p_i')^{-1} (int p_i p_j') (int p_j p_j')^{-1}`` where
    ``p_i`` is the residual of ``g_i`` after projection on ``f_i``.
    """
    fr = _as_fraction_lists(fractions)
    psi = np.atleast_2d(np.asarray(psi, dtype=float))
    mb = moment_blocks(fr)
    n = len(fr)
    A = [mb.GF[i][i] @ _inv(mb.FF[i][i], "FF") for i in range(n)]
    PP = [[mb.GG[i][j] - A[i] @ mb.FG[i][j] - mb.GF[i][j] @ A[j].T + A[i] @ mb.FF[i][j] @ A[j].T
           for j in range(n)] for i in range(n)]
    PPinv = [_inv(PP[i][i], "projected step moments") if PP[i][i].size else PP[i][i]
             for i in range(n)]
    P = [[PPinv[i] @ PP[i][j] @ PPinv[j] for j in range(n)] for i in range(n)]
    dinv = [1.0 / np.atleast_1d(np.asarray(d, dtype=float)) for d in deltas]
    xi_s = np.block([[psi[i, j] * (dinv[i][:, None] * P[i][j] * dinv[j][None, :])
                      for j in range(n)] for i in range(n)])
    return EquationLimitCov(0.5 * (xi_s + xi_s.T), P)


# ---------------------------------------------------------------------------
# additional-break kernels
# ---------------------------------------------------------------------------

class AddBreakKernels:
    """Variance kernels of an extra slope break at fraction ``v`` in equation ``i``.

    Parameters
    ----------
    cov : LimitCov
        System limit covariance at the maintained breaks.
    i : int
        Equation receiving the candidate break.
    known_breaks : bool
        Treat the maintained fractions as known, dropping the terms induced
        by their estimation. With ``sigma == psi`` the variance then equals
        ``xi1(v)``.
    """

    def __init__(self, cov: LimitCov, i: int, known_breaks: bool = False):
        self.cov = cov
        self.i = int(i)
        self.known_breaks = known_breaks
        self._Qi = np.linalg.inv(cov.Q_FF)
        self._xi1_inv = np.linalg.inv(cov.xi1)

    def _fb(self, v: float) -> tuple[NDArray, NDArray, float]:
        b = [("ramp", float(v))]
        FB = [_gram(_f_basis(x), b)[:, 0] for x in self.cov.fractions]
        GB = [_gram(_g_basis(x), b)[:, 0] for x in self.cov.fractions]
        return FB, GB, int_ramp_sq(v)

    def _parts(self, v: float):
        c, i = self.cov, self.i
        FB, GB, BB = self._fb(v)
        n = len(FB)
        Q_FB = np.concatenate([c.s[j, i] * FB[j] for j in range(n)])
        G_FB = np.concatenate([c.kappa[j, i] * FB[j] for j in range(n)])
        Q_GB = np.concatenate([c.s[j, i] * GB[j] for j in range(n)])
        G_GB = np.concatenate([c.kappa[j, i] * GB[j] for j in range(n)])
        Q_BB, G_BB = c.s[i, i] * BB, c.kappa[i, i] * BB
        Qi = self._Qi
        xi0 = G_BB - Q_FB @ Qi @ G_FB - G_FB @ Qi @ Q_FB + Q_FB @ Qi @ c.G_FF @ Qi @ Q_FB
        xi1 = Q_BB - Q_FB @ Qi @ Q_FB
        A = c.Q_GF @ Qi
        vs0 = c.d_delta @ (G_GB - A @ G_FB - c.G_GF @ Qi @ Q_FB + A @ c.G_FF @ Qi @ Q_FB)
        vs1 = c.d_delta @ (Q_GB - A @ Q_FB)
        return xi0, xi1, vs0, vs1

    def xi0(self, v: float) -> float:
        return float(self._parts(v)[0])

    def xi1(self, v: float) -> float:
        return float(self._parts(v)[1])

    def vs0(self, v: float) -> NDArray[np.float64]:
        return self._parts(v)[2]

    def vs1(self, v: float) -> NDArray[np.float64]:
        return self._parts(v)[3]

    def var_eta(self, v: float) -> float:
        xi0, _, vs0, vs1 = self._parts(v)
        if self.known_breaks:
            return float(xi0)
        W = self._xi1_inv
        return float(xi0 - vs1 @ W @ vs0 - vs0 @ W @ vs1 + vs1 @ W @ self.cov.xi0 @ W @ vs1)


def addbreak_kernels(fractions: Sequence[ArrayLike], deltas: Sequence[ArrayLike], sigma: ArrayLike,
                     psi: ArrayLike, i: int, known_breaks: bool = False) -> AddBreakKernels:
    """Additional-break variance kernels for equation ``i``; see :class:`AddBreakKernels`."""
    return AddBreakKernels(assemble_limit_cov(fractions, deltas, sigma, psi), i, known_breaks)
