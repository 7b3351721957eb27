"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line through the ``acceptance`` fixture; the
lines are printed in the terminal summary. Monte Carlo criteria run at full
size unless ``JOINTBREAKS_SMOKE=1``. The application criterion needs the
climate CSVs in ``JOINTBREAKS_CLIMATE_DATA`` and is skipped otherwise.
"""

import os
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest
from conftest import full_mode
from scipy.integrate import quad
from scipy.stats import chi2

from jointbreaks.bootstrap import BootstrapConfig
from jointbreaks.break_search import RestrictionSet, ols_break_search, system_break_search
from jointbreaks.break_tests import METHODS, gls_wald_test, ols_wald_test, run_test
from jointbreaks.climate_cli import (
    SeriesTable,
    analyze_common_breaks,
    analyze_hiatus,
    bic_select_filter,
    filter_series,
    load_tables,
)
from jointbreaks.extra_break import sup_lr_extra_break
from jointbreaks.limit_dist import assemble_eq_limit_cov, assemble_limit_cov, int_ramp_sq, moment_blocks
from jointbreaks.monte_carlo import DgpSpec, HYPOTHESES, design_grid, generate_dgp, run_table, simulate_cell
from jointbreaks.trend_model import EquationParams, MultiSeries, evaluate_trend

FULL = full_mode()
WARP = BootstrapConfig(warp_speed=True, seed=0)


def _basis_fn(kind, a):
    if kind == "one":
        return lambda r: 1.0
    if kind == "r":
        return lambda r: r
    if kind == "ramp":
        return lambda r: max(r - a, 0.0)
    return lambda r: float(r > a)


def _quad_gram(us, vs):
    out = np.empty((len(us), len(vs)))
    for p, (ku, a) in enumerate(us):
        for q, (kv, b) in enumerate(vs):
            fu, fv = _basis_fn(ku, a), _basis_fn(kv, b)
            out[p, q] = quad(lambda r: fu(r) * fv(r), 0, 1, points=[a, b], epsabs=1e-14, epsrel=1e-14,
                             limit=200)[0]
    return out


@pytest.mark.filterwarnings("ignore::scipy.integrate.IntegrationWarning")
def test_c1_closed_form_moments_match_quadrature(acceptance):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        fr = [np.sort(rng.uniform(0.02, 0.98, rng.integers(1, 3))) for _ in range(2)]
        nu = rng.uniform(0.02, 0.98)
        # the candidate extra break enters as a third block of ramp/step functions
        fr.append(np.array([nu]))
        mb = moment_blocks(fr)
        fb = [[("one", 0.0), ("r", 0.0)] + [("ramp", x) for x in f] for f in fr]
        gb = [[("step", x) for x in f] for f in fr]
        for i in range(3):
            for j in range(i, 3):
                worst = max(worst,
                            np.abs(mb.FF[i][j] - _quad_gram(fb[i], fb[j])).max(),
                            np.abs(mb.FG[i][j] - _quad_gram(fb[i], gb[j])).max(),
                            np.abs(mb.GG[i][j] - _quad_gram(gb[i], gb[j])).max())
        sq = quad(lambda r: max(r - nu, 0.0) ** 2, 0, 1, points=[nu], epsabs=1e-14, epsrel=1e-14)[0]
        worst = max(worst, abs(int_ramp_sq(nu) - sq))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-10 and elapsed < 10
    acceptance.record("C1 closed-form moments vs quadrature", ok,
                      f"max abs error {worst:.2e} over 200 configurations, {elapsed:.1f} s")
    assert ok


PATTERNS = [(1, 0), (0, 1), (1, 1), (2, 0), (0, 2), (2, 1), (1, 2)]


def _random_dates(rng, m, lo=5, hi=95, sep=5):
    while True:
        d = np.sort(rng.choice(np.arange(lo, hi + 1), size=m, replace=False))
        if m < 2 or np.all(np.diff(d) >= sep):
            return tuple(int(v) for v in d)


def test_c2_noiseless_recovery(acceptance):
    rng = np.random.default_rng(2)
    T = 100
    start = time.perf_counter()
    misses = []
    for c in range(100):
        m = PATTERNS[c % len(PATTERNS)]
        rows, truth = [], []
        for mi in m:
            k = _random_dates(rng, mi)
            delta = rng.uniform(0.3, 2.0, mi) * rng.choice([-1, 1], mi)
            rows.append(evaluate_trend(EquationParams(rng.normal(), rng.normal(0, 0.05), delta), k, T))
            truth.append(k)
        y = MultiSeries(np.vstack(rows))
        ols = tuple(ols_break_search(row, mi)[0] for row, mi in zip(y.values, m))
        sys_k = system_break_search(y, m)[0].per_equation
        if ols != tuple(truth) or tuple(sys_k) != tuple(truth):
            misses.append((c, truth, ols, sys_k))
    elapsed = time.perf_counter() - start
    ok = not misses and elapsed < 60
    acceptance.record("C2 noiseless recovery", ok,
                      f"{100 - len(misses)}/100 exact (OLS and system), {elapsed:.1f} s")
    assert ok, misses[:3]


def test_c3_single_equation_collapse(acceptance):
    rng = np.random.default_rng(3)
    T = 100
    wald_gap = 0.0
    for trial in range(20):
        m = 1 + trial % 2
        k = (50,) if m == 1 else (30, 65)
        y = MultiSeries(evaluate_trend(EquationParams(0.0, 0.02, [0.5] * m), k, T)[None, :]
                        + 0.5 * rng.standard_normal((1, T)))
        restriction = RestrictionSet.fixed_dates([kk / T for kk in k])
        g = gls_wald_test(y, (m,), restriction).statistic
        o = ols_wald_test(y, (m,), restriction).statistic
        wald_gap = max(wald_gap, abs(g - o) / max(1.0, abs(o)))
    xi_gap = 0.0
    for _ in range(50):
        m = int(rng.integers(1, 3))
        fr = np.sort(rng.uniform(0.1, 0.9, m))
        if m == 2 and fr[1] - fr[0] < 0.05:
            fr[1] = fr[0] + 0.05
        d = rng.uniform(0.2, 2.0, m) * rng.choice([-1, 1], m)
        xi = assemble_limit_cov([fr], [d], 1.0, 1.0).xi
        xi_s = assemble_eq_limit_cov([fr], [d], 1.0).xi_s
        xi_gap = max(xi_gap, np.abs(xi - xi_s).max() / max(1.0, np.abs(xi_s).max()))
    ok = wald_gap <= 1e-8 and xi_gap <= 1e-10
    acceptance.record("C3 single-equation collapse", ok,
                      f"GLS vs OLS Wald gap {wald_gap:.1e}; Xi vs Xi_s gap {xi_gap:.1e}")
    assert ok


def test_c4_lr_size_table(acceptance):
    reps, tol_a, tol_b = (1000, 0.05, 0.03) if FULL else (200, 0.08, 0.08)
    designs = [(0.0, 0.0, 0.07, 0.06), (0.7, 0.0, 0.50, 0.04), (0.3, 0.5, 0.18, 0.07)]
    specs = [DgpSpec(alpha=a, rho=p) for a, p, _, _ in designs]
    start = time.perf_counter()
    table = run_table(["LR"], specs, reps, WARP, hypotheses=(1,))
    elapsed = time.perf_counter() - start
    ok, parts = True, []
    for a, p, ta, tb in designs:
        ra = table.rate("LR", a, p, 0.5, 1)
        rb = table.rate("LR", a, p, 0.5, 1, "bootstrap")
        ok &= abs(ra - ta) <= tol_a and abs(rb - tb) <= tol_b
        parts.append(f"({a:g},{p:g}) asy {ra:.3f} vs {ta:.2f}, boot {rb:.3f} vs {tb:.2f}")
    if not FULL:
        ok &= elapsed < 300
    acceptance.record(f"C4 LR size, delta=0.5 ({reps} reps)", ok, "; ".join(parts) + f"; {elapsed:.0f} s")
    assert ok


def test_c5_wald_spot_rows(acceptance):
    reps = 1000 if FULL else 200
    g = run_table(["GLS_WALD"], [DgpSpec()], reps, hypotheses=(1,))
    o = run_table(["OLS_WALD"], [DgpSpec(alpha=0.7, rho=-0.5)], reps, WARP, hypotheses=(1,))
    g_asy = g.rate("GLS_WALD", 0.0, 0.0, 0.5, 1)
    o_asy = o.rate("OLS_WALD", 0.7, -0.5, 0.5, 1)
    o_boot = o.rate("OLS_WALD", 0.7, -0.5, 0.5, 1, "bootstrap")
    ok = abs(g_asy - 0.13) <= 0.04 and abs(o_asy - 0.39) <= 0.06 and abs(o_boot - 0.05) <= 0.03
    acceptance.record(f"C5 Wald spot rows ({reps} reps)", ok,
                      f"GLS-Wald (0,0) asy {g_asy:.3f} vs 0.13; OLS-Wald (0.7,-0.5) asy {o_asy:.3f} vs 0.39, "
                      f"boot {o_boot:.3f} vs 0.05")
    assert ok


def test_c6_power_floor(acceptance):
    reps = 500 if FULL else 100
    specs = design_grid(1.0) + design_grid(1.5)
    table = run_table(list(METHODS), specs, reps, hypotheses=(2, 4))
    worst = min(table.rows, key=lambda r: r.asymptotic)
    ok = worst.asymptotic >= 0.95
    acceptance.record(f"C6 power floor, hypotheses 2 and 4, delta >= 1 ({reps} reps)", ok,
                      f"minimum asymptotic rejection {worst.asymptotic:.3f} ({worst.method}, "
                      f"alpha={worst.alpha:g}, rho={worst.rho:g}, delta={worst.delta:g}, "
                      f"hypothesis {worst.hypothesis})")
    assert ok


def test_c7_lr_null_quantile(acceptance):
    reps = 1000 if FULL else 200
    draws = simulate_cell(DgpSpec(delta=(1.5, 1.5)), ["LR"], reps, hypotheses=(1,))
    q95 = float(np.quantile(draws[:, 0, 0, 0], 0.95))
    target = chi2.ppf(0.95, 2)
    ok = abs(q95 - target) <= 0.6
    acceptance.record(f"C7 LR null 95th percentile ({reps} reps)", ok,
                      f"{q95:.3f} vs {target:.3f}; size {np.mean(draws[:, 0, 0, 0] > target):.3f}")
    assert ok


def test_c8_affine_and_scale_invariance(acceptance):
    rng = np.random.default_rng(8)
    t = np.arange(1, 101.0)
    worst, flips = 0.0, 0
    for _ in range(50):
        spec = DgpSpec(delta=(float(rng.uniform(0.5, 1.5)),) * 2, alpha=float(rng.uniform(0, 0.7)),
                       rho=float(rng.uniform(-0.5, 0.5)))
        y = generate_dgp(spec, rng)
        hyp = int(rng.integers(1, 5))
        restriction = HYPOTHESES[hyp]
        shift = rng.normal(0, 5, (2, 1)) + rng.normal(0, 0.5, (2, 1)) * t
        scale = np.exp(rng.uniform(-3, 3, (2, 1)))
        shifted = y.with_values(y.values + shift)
        scaled = y.with_values(y.values * scale)
        for method in METHODS:
            a = run_test(method, y, (1, 1), restriction)
            b = run_test(method, shifted, (1, 1), restriction)
            c = run_test(method, scaled, (1, 1), restriction)
            worst = max(worst, abs(b.statistic - a.statistic) / max(abs(a.statistic), 1e-3))
            flips += (a.p_asymptotic < 0.05) != (c.p_asymptotic < 0.05)
    ok = worst <= 1e-6 and flips == 0
    acceptance.record("C8 affine/scale invariance (50 trials)", ok,
                      f"max relative change under trend shifts {worst:.1e}; decision flips under scaling {flips}")
    assert ok


def _extra_sample(seed, eq, T=100):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(2):
        if i == eq:
            rows.append(evaluate_trend(EquationParams(0.0, 0.02, [1.0, -1.0]), [T // 4, 65], T))
        else:
            rows.append(evaluate_trend(EquationParams(0.0, 0.02, [-1.0]), [65], T))
    return MultiSeries(np.vstack(rows) + 0.1 * rng.standard_normal((2, T)))


def test_c9_extra_break_detection(acceptance):
    located = right_eq = 0
    for r in range(200):
        eq = r % 2
        y = _extra_sample(9000 + r, eq)
        k_hat = system_break_search(y, (1, 1))[0]
        rep = sup_lr_extra_break(y, k_hat)
        right_eq += rep.equation_hat == eq
        located += rep.equation_hat == eq and abs(rep.nu_hat - 25) <= 3
    ok = located >= 190 and right_eq >= 180
    acceptance.record("C9 extra-break detection (200 reps)", ok,
                      f"located within 3 periods {located}/200; correct equation {right_eq}/200")
    assert ok


TEMPERATURES = ("GH", "NH", "SH", "GN", "NN", "SN", "GAvg", "NAvg", "SAvg")


def _filtered(table: SeriesTable, name: str) -> SeriesTable:
    modes = table.select(["AMO", "NAO"])
    temp = table.select([name])
    return filter_series(temp, name, modes, bic_select_filter(temp, name, modes, 2))


def test_c10_application(acceptance):
    root = os.environ.get("JOINTBREAKS_CLIMATE_DATA")
    if not root:
        acceptance.skip("C10 application reproduction", "JOINTBREAKS_CLIMATE_DATA not set")
        pytest.skip("climate data not available")
    table = load_tables(sorted(Path(root).glob("*.csv")))
    forcing = table.select(["W"])
    boot = BootstrapConfig(replications=999, seed=0)

    row = analyze_common_breaks(forcing.join(_filtered(table, "GH")), "W", "GH", years=(1900, 1992))
    dates = (row.forcing_breaks, row.temperature_breaks, row.common_breaks)
    hiatus = analyze_hiatus(forcing.join(_filtered(table, "SAvg")), "W", "SAvg", years=(1963, 2014), boot=boot)
    if dates == ((1963,), (1964,), (1963,)) and abs(hiatus.p_bootstrap - 0.01) <= 0.03 \
            and hiatus.temperature_break == 1986:
        acceptance.record("C10 application reproduction", True,
                          f"dates {dates}; hiatus p {hiatus.p_bootstrap:.3f}, break {hiatus.temperature_break}")
        return

    names = [n for n in TEMPERATURES if n in table.columns]
    p_common, p_hiatus = [], []
    for name in names:
        pair = forcing.join(_filtered(table, name))
        rep = analyze_common_breaks(pair, "W", name, years=(1900, 1992), methods=("LR",), boot=boot)
        p_common.append(rep.tests[0].p_bootstrap)
        if name[0] in "GS":
            p_hiatus.append(analyze_hiatus(pair, "W", name, years=(1963, 2014), boot=boot).p_bootstrap)
    share = float(np.mean(np.array(p_common) > 0.10))
    ok = share >= 0.8 and all(p < 0.10 for p in p_hiatus)
    acceptance.record("C10 application (vintage fallback)", ok,
                      f"vintage dates {dates}; common-break p > 0.10 in {share:.0%} of {len(names)} pairs; "
                      f"hiatus p {', '.join(f'{p:.3f}' for p in p_hiatus)}")
    assert ok


def _run_cli(*args):
    return subprocess.run([sys.executable, "-m", "jointbreaks", *args], capture_output=True, check=True).stdout


def test_c11_determinism(acceptance, tmp_path):
    y = generate_dgp(DgpSpec(alpha=0.3, rho=0.5, break_dates=(45, 55)), 11)
    path = tmp_path / "system.csv"
    path.write_text("year,a,b\n" + "".join(f"{1900 + t},{float(y.values[0, t])!r},{float(y.values[1, t])!r}\n"
                                           for t in range(y.T)))
    common = ["test-common", "--data", str(path), "--series", "a,b", "--breaks", "1,1", "--boot-reps", "19",
              "--seed", "5", "--format", "csv"]
    mc = ["mc-table", "--test", "LR", "--reps", "20", "--designs", "0.3:0.5", "--seed", "5", "--format", "csv"]
    outputs = {
        "test-common": [_run_cli(*common, "--workers", w) for w in ("1", "1", "2")],
        "mc-table": [_run_cli(*mc, "--workers", w) for w in ("1", "1", "2")],
    }
    ok = all(len(set(v)) == 1 and v[0] for v in outputs.values())
    acceptance.record("C11 determinism", ok,
                      "; ".join(f"{k}: {len(set(v))} distinct output(s) over 2 serial + 1 two-worker runs"
                                for k, v in outputs.items()))
    assert ok
