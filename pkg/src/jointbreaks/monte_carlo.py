"""Simulation design for the common-break tests and a table harness.

Bivariate system, one slope break per equation, errors

    e_t = alpha e_{t-1} + eps_t,   eps_t ~ N(0, (1 - alpha)^2 I),
    u_t = L e_t,                   L L' = [[1, rho], [rho, 1]],

so every error series has unit long-run variance.
"""

from __future__ import annotations

import csv
import io
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np
from numpy.typing import NDArray

from jointbreaks.bootstrap import (
    BootstrapConfig,
    _run_indexed,
    make_null_sample,
    null_error_model,
    warp_speed_decisions,
)
from jointbreaks.break_search import (
    RestrictionSet,
    SearchConfig,
    fgls_fit,
    system_break_search,
)
from jointbreaks.break_tests import METHODS, gls_wald_test, lr_test, ols_wald_test
from jointbreaks.errors import InvalidArgumentError, JointBreaksError
from jointbreaks.trend_model import BreakVector, EquationParams, MultiSeries, evaluate_trend

AR_BURN_IN = 100

HYPOTHESES: dict[int, RestrictionSet] = {
    1: RestrictionSet.fixed_dates([0.5, 0.5]),
    2: RestrictionSet.fixed_dates([0.525, 0.475]),
    3: RestrictionSet.common([[0, 1]], 2),
    4: RestrictionSet.fixed_offsets([(0, 1, 0.05)], 2),
}


@dataclass(frozen=True)
class DgpSpec:
    """Parameters of the bivariate simulation design."""

    T: int = 100
    delta: tuple[float, float] = (0.5, 0.5)
    alpha: float = 0.0
    rho: float = 0.0
    break_dates: tuple[int, int] = (50, 50)
    mu: tuple[float, float] = (0.0, 0.0)
    beta: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not abs(self.alpha) < 1 or not abs(self.rho) < 1:
            raise InvalidArgumentError("need |alpha| < 1 and |rho| < 1")


def generate_errors(spec: DgpSpec, rng: np.random.Generator) -> NDArray[np.float64]:
    """``2 x T`` error draws of the design."""
    a = spec.alpha
    eps = (1.0 - a) * rng.standard_normal((2, spec.T + AR_BURN_IN))
    e = np.zeros(2)
    path = np.empty_like(eps)
    for t in range(eps.shape[1]):
        e = a * e + eps[:, t]
        path[:, t] = e
    L = np.linalg.cholesky(np.array([[1.0, spec.rho], [spec.rho, 1.0]]))
    return L @ path[:, AR_BURN_IN:]


def trend_component(spec: DgpSpec) -> NDArray[np.float64]:
    return np.vstack([
        evaluate_trend(EquationParams(spec.mu[i], spec.beta[i], [spec.delta[i]]), [spec.break_dates[i]],
                       spec.T)
        for i in range(2)])


def generate_dgp(spec: DgpSpec, seed: int | np.random.Generator | np.random.SeedSequence) -> MultiSeries:
    """One simulated sample."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return MultiSeries(trend_component(spec) + generate_errors(spec, rng))


# ---------------------------------------------------------------------------
# one Monte Carlo replicate
# ---------------------------------------------------------------------------

def _fgls_statistics(y: MultiSeries, restriction: RestrictionSet, methods: Sequence[str],
                     cfg: SearchConfig, unrestricted) -> tuple[dict[str, float], BreakVector | None]:
    out, k_r = {}, None
    if "LR" in methods:
        rep = lr_test(y, (1, 1), restriction, cfg, unrestricted)
        out["LR"], k_r = rep.statistic, rep.k_restricted
    if "GLS_WALD" in methods:
        out["GLS_WALD"] = gls_wald_test(y, (1, 1), restriction, cfg, unrestricted).statistic
    return out, k_r


def _safe(fn, *args):
    try:
        return fn(*args)
    except (JointBreaksError, np.linalg.LinAlgError):
        return None


def simulate_replicate(r: int, spec: DgpSpec, methods: Sequence[str], hypotheses: Sequence[int],
                       cfg: SearchConfig, boot: BootstrapConfig | None,
                       seeds: Sequence[np.random.SeedSequence]) -> NDArray[np.float64]:
    """Observed and (one) bootstrap statistic per method and hypothesis.

    Returns an array of shape ``(2, len(methods), len(hypotheses))``; the
    second slice is NaN when ``boot`` is ``None`` and for failed draws.
    """
    data_seed, boot_seed = seeds[r].spawn(2)
    y = generate_dgp(spec, np.random.default_rng(data_seed))
    out = np.full((2, len(methods), len(hypotheses)), np.nan)
    fgls_methods = [m for m in methods if m != "OLS_WALD"]
    unrestricted = system_break_search(y, (1, 1), None, cfg) if fgls_methods else None
    hyp_seeds = boot_seed.spawn(len(hypotheses))
    for h, hyp in enumerate(hypotheses):
        restriction = HYPOTHESES[hyp]
        rng = np.random.default_rng(hyp_seeds[h])
        fgls_rng, ols_rng = rng.spawn(2)
        if fgls_methods:
            stats, k_r = _fgls_statistics(y, restriction, fgls_methods, cfg, unrestricted)
            for name, v in stats.items():
                out[0, methods.index(name), h] = v
            if boot is not None:
                if k_r is None:
                    k_r = system_break_search(y, (1, 1), restriction, cfg)[0]
                null_fit = fgls_fit(y, k_r, cfg, allow_singular=True)
                var = null_error_model(null_fit, fgls_rng, boot)
                y_star = make_null_sample(y, null_fit, var, fgls_rng, boot.burn_in)
                u_star = _safe(system_break_search, y_star, (1, 1), None, cfg)
                if u_star is not None:
                    res = _safe(_fgls_statistics, y_star, restriction, fgls_methods, cfg, u_star)
                    if res is not None:
                        for name, v in res[0].items():
                            out[1, methods.index(name), h] = v
        if "OLS_WALD" in methods:
            j = methods.index("OLS_WALD")
            out[0, j, h] = ols_wald_test(y, (1, 1), restriction, cfg).statistic
            if boot is not None:
                ols_cfg = replace(cfg, estimator="ols")
                null_fit = system_break_search(y, (1, 1), restriction, ols_cfg)[1]
                var = null_error_model(null_fit, ols_rng, boot)
                y_star = make_null_sample(y, null_fit, var, ols_rng, boot.burn_in)
                rep = _safe(ols_wald_test, y_star, (1, 1), restriction, cfg)
                if rep is not None:
                    out[1, j, h] = rep.statistic
    return out


def _cell_seed(seed: int, spec: DgpSpec) -> np.random.SeedSequence:
    key = [int(round(1000 * v)) + 100_000 for v in (spec.alpha, spec.rho, *spec.delta)]
    return np.random.SeedSequence([int(seed), spec.T, *key])


def simulate_cell(spec: DgpSpec, methods: Sequence[str], reps: int, hypotheses: Sequence[int] = (1, 2, 3, 4),
                  cfg: SearchConfig | None = None, boot: BootstrapConfig | None = None,
                  seed: int = 0, workers: int = 1) -> NDArray[np.float64]:
    """Stack :func:`simulate_replicate` over ``reps`` replicates: ``(reps, 2, M, H)``."""
    cfg = cfg or SearchConfig()
    methods = list(methods)
    for mth in methods:
        if mth not in METHODS:
            raise InvalidArgumentError(f"unknown test method {mth!r}")
    seeds = _cell_seed(seed, spec).spawn(reps)
    fn = partial(simulate_replicate, spec=spec, methods=methods, hypotheses=list(hypotheses), cfg=cfg,
                 boot=boot, seeds=seeds)
    return np.stack(_run_indexed(fn, range(reps), workers))


def rejection_rates(draws: NDArray, df: Sequence[int], level: float = 0.05) -> tuple[NDArray, NDArray]:
    """Asymptotic and warp-speed bootstrap rejection frequencies, each ``(M, H)``."""
    from scipy.stats import chi2

    crit = chi2.ppf(1.0 - level, np.asarray(df))
    obs, bst = draws[:, 0], draws[:, 1]
    asym = (obs > crit[None, None, :]).mean(axis=0)
    reps, M, H = obs.shape
    boot = warp_speed_decisions(obs.reshape(reps, M * H), bst.reshape(reps, M * H), level)
    return asym, boot.mean(axis=0).reshape(M, H)


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    method: str
    alpha: float
    rho: float
    delta: float
    hypothesis: int
    asymptotic: float
    bootstrap: float


@dataclass
class TableResult:
    """Rejection frequencies indexed by method, design and hypothesis."""

    reps: int
    rows: list[TableRow] = field(default_factory=list)

    def rate(self, method: str, alpha: float, rho: float, delta: float, hypothesis: int,
             column: str = "asymptotic") -> float:
        for row in self.rows:
            if (row.method, row.hypothesis) == (method, hypothesis) and np.allclose(
                    (row.alpha, row.rho, row.delta), (alpha, rho, delta)):
                return getattr(row, column)
        raise KeyError((method, alpha, rho, delta, hypothesis))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["method", "alpha", "rho", "delta", "hypothesis", "asymptotic", "bootstrap"])
        for r in self.rows:
            w.writerow([r.method, f"{r.alpha:g}", f"{r.rho:g}", f"{r.delta:g}", r.hypothesis,
                        f"{r.asymptotic:.3f}", f"{r.bootstrap:.3f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        """Fixed-width layout: one line per (method, delta, alpha, rho)."""
        lines = []
        keys = sorted({(r.method, r.delta) for r in self.rows}, key=lambda k: (METHODS.index(k[0]), k[1]))
        for method, delta in keys:
            sub = [r for r in self.rows if (r.method, r.delta) == (method, delta)]
            hyps = sorted({r.hypothesis for r in sub})
            lines.append(f"{method}  delta = {delta:g}  ({self.reps} replications)")
            head = f"{'alpha':>6} {'rho':>6} |" + "".join(f"{f'({h}) asy':>9}{'boot':>7} |" for h in hyps)
            lines.append(head)
            lines.append("-" * len(head))
            designs = []
            for r in sub:
                if (r.alpha, r.rho) not in designs:
                    designs.append((r.alpha, r.rho))
            for a, p in designs:
                cells = {r.hypothesis: r for r in sub if (r.alpha, r.rho) == (a, p)}
                line = f"{a:6.1f} {p:6.1f} |"
                for h in hyps:
                    c = cells[h]
                    line += f"{c.asymptotic:9.2f}{c.bootstrap:7.2f} |"
                lines.append(line)
            lines.append("")
        return "\n".join(lines)


def run_table(methods: Sequence[str], specs: Sequence[DgpSpec], reps: int = 1000,
              boot: BootstrapConfig | None = None, cfg: SearchConfig | None = None,
              hypotheses: Sequence[int] = (1, 2, 3, 4), seed: int = 0, workers: int = 1,
              level: float = 0.05) -> TableResult:
    """Rejection frequencies for every design in ``specs``.

    The bootstrap column uses the warp-speed scheme: one bootstrap sample
    per replicate, critical value from the pooled bootstrap statistics. It
    is NaN when ``boot`` is ``None``.
    """
    df = [HYPOTHESES[h].q for h in hypotheses]
    result = TableResult(reps)
    methods = list(methods)
    for spec in specs:
        draws = simulate_cell(spec, methods, reps, hypotheses, cfg, boot, seed, workers)
        asym, bst = rejection_rates(draws, df, level)
        if boot is None:
            bst = np.full_like(bst, np.nan)
        for i, mth in enumerate(methods):
            for j, h in enumerate(hypotheses):
                result.rows.append(TableRow(mth, spec.alpha, spec.rho, spec.delta[0], h,
                                            float(asym[i, j]), float(bst[i, j])))
    return result


ALPHA_RHO_GRID = tuple((a, p) for a in (0.0, 0.3, 0.7) for p in (-0.5, 0.0, 0.5))


def design_grid(delta: float, T: int = 100, pairs: Sequence[tuple[float, float]] = ALPHA_RHO_GRID) -> list[DgpSpec]:
    return [DgpSpec(T=T, delta=(delta, delta), alpha=a, rho=p) for a, p in pairs]
