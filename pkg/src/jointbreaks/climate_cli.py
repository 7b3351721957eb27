"""Annual climate series and the command-line front end.

Covers CSV ingestion, oscillation filtering with BIC lag choice, the
common-break and additional-break analyses, and the ``jointbreaks`` CLI.

Subcommands::

    estimate     break dates of a system (optionally restricted)
    test-common  LR / GLS-Wald / OLS-Wald tests of break-date restrictions
    test-extra   test for one additional break
    filter       remove AMO/NAO-type modes from a series (BIC lag choice)
    mc-table     simulated rejection frequencies of the common-break tests
"""

from __future__ import annotations

import argparse
import csv
import io
import itertools
import logging
import math
import sys
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from jointbreaks.bootstrap import BootstrapConfig, bootstrap_test
from jointbreaks.break_search import (
    RestrictionSet,
    SearchConfig,
    common_break_restriction,
    system_break_search,
)
from jointbreaks.break_tests import METHODS, run_test
from jointbreaks.errors import InvalidArgumentError, JointBreaksError, ParseError
from jointbreaks.extra_break import DEFAULT_TRIM, extra_break_test
from jointbreaks.monte_carlo import ALPHA_RHO_GRID, design_grid, run_table
from jointbreaks.trend_model import MultiSeries

# ---------------------------------------------------------------------------
# series tables
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SeriesTable:
    """Named annual series on a common run of consecutive years."""

    years: NDArray[np.int64]
    columns: Mapping[str, NDArray[np.float64]]

    def __post_init__(self) -> None:
        years = np.asarray(self.years, dtype=np.int64)
        if years.size and np.any(np.diff(years) != 1):
            raise ParseError("years must be strictly consecutive")
        cols = {}
        for name, v in self.columns.items():
            v = np.asarray(v, dtype=float)
            if v.shape != years.shape:
                raise ParseError(f"column {name!r} has {v.size} values for {years.size} years")
            cols[name] = v
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "columns", cols)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def column(self, name: str) -> NDArray[np.float64]:
        if name not in self.columns:
            raise ParseError(f"column {name!r} not found; available: {', '.join(self.columns)}")
        return self.columns[name]

    def select(self, names: Sequence[str]) -> SeriesTable:
        return SeriesTable(self.years, {n: self.column(n) for n in names})

    def slice(self, first: int | None = None, last: int | None = None) -> SeriesTable:
        """Restrict to ``first..last`` (inclusive); both must lie in the table."""
        first = int(self.years[0]) if first is None else int(first)
        last = int(self.years[-1]) if last is None else int(last)
        if first > last:
            raise InvalidArgumentError(f"empty year range {first}:{last}")
        if first < self.years[0] or last > self.years[-1]:
            raise InvalidArgumentError(
                f"range {first}:{last} not covered by data ({self.years[0]}:{self.years[-1]})")
        keep = (self.years >= first) & (self.years <= last)
        return SeriesTable(self.years[keep], {n: v[keep] for n, v in self.columns.items()})

    def join(self, other: SeriesTable) -> SeriesTable:
        """Columns of both tables on their common years."""
        first = max(self.years[0], other.years[0])
        last = min(self.years[-1], other.years[-1])
        if first > last:
            raise InvalidArgumentError("tables share no years")
        a, b = self.slice(first, last), other.slice(first, last)
        dup = set(a.columns) & set(b.columns)
        if dup:
            raise ParseError(f"duplicate column names: {', '.join(sorted(dup))}")
        return SeriesTable(a.years, {**a.columns, **b.columns})

    def to_multiseries(self, names: Sequence[str]) -> MultiSeries:
        return MultiSeries(np.vstack([self.column(n) for n in names]), tuple(names), int(self.years[0]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["year", *self.columns])
        for t, yr in enumerate(self.years):
            w.writerow([int(yr), *(repr(float(v[t])) for v in self.columns.values())])
        return buf.getvalue()


def parse_series(text: str, columns: Sequence[str] | None = None, source: str = "<input>") -> SeriesTable:
    """Parse comma-delimited text with a ``year`` column and one column per series."""
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if any(c.strip() for c in r)]
    if not rows:
        raise ParseError(f"{source}: empty file")
    header = [h.strip() for h in rows[0]]
    lower = [h.lower() for h in header]
    if "year" not in lower:
        raise ParseError(f"{source}: header lacks a 'year' column")
    yi = lower.index("year")
    names = [h for j, h in enumerate(header) if j != yi]
    if len(set(names)) != len(names):
        raise ParseError(f"{source}: duplicate column names in header")
    wanted = names if columns is None else list(columns)
    for c in wanted:
        if c not in names:
            raise ParseError(f"{source}: column {c!r} not found; available: {', '.join(names)}")
    years, data = [], {c: [] for c in wanted}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(f"{source}:{lineno}: expected {len(header)} fields, got {len(row)}")
        try:
            years.append(int(row[yi].strip()))
        except ValueError:
            raise ParseError(f"{source}:{lineno}: year {row[yi]!r} is not an integer") from None
        for c in wanted:
            cell = row[header.index(c)].strip()
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"{source}:{lineno}: column {c!r}: {cell!r} is not numeric") from None
            if not math.isfinite(v):
                raise ParseError(f"{source}:{lineno}: column {c!r}: missing or non-finite value")
            data[c].append(v)
    years = np.array(years, dtype=np.int64)
    if years.size == 0:
        raise ParseError(f"{source}: no data rows")
    gaps = np.flatnonzero(np.diff(years) != 1)
    if gaps.size:
        j = gaps[0]
        kind = "duplicate" if years[j + 1] == years[j] else "non-consecutive"
        raise ParseError(f"{source}:{j + 3}: {kind} year {years[j + 1]} after {years[j]}")
    return SeriesTable(years, {c: np.array(v) for c, v in data.items()})


def load_series(path: str | Path, columns: Sequence[str] | None = None) -> SeriesTable:
    """Read a CSV file (UTF-8, header ``year,<name>,...``)."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc.strerror or exc}") from None
    return parse_series(text, columns, str(path))


def load_tables(paths: Iterable[str | Path]) -> SeriesTable:
    """Load several CSV files and join them on their common years."""
    table = None
    for p in paths:
        t = load_series(p)
        table = t if table is None else table.join(t)
    if table is None:
        raise InvalidArgumentError("no data files given")
    return table


# ---------------------------------------------------------------------------
# oscillation filtering
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterSpec:
    """Regressors chosen for filtering a temperature series.

    Attributes
    ----------
    kmax : int
        Lags ``0..kmax-1`` were candidates.
    chosen : tuple of (str, int)
        Selected (mode name, lag) pairs; each mode appears at most once.
    coefficients : ndarray
        Constant followed by one coefficient per chosen regressor, fitted on
        all available years.
    bic : float
    """

    kmax: int
    chosen: tuple[tuple[str, int], ...]
    coefficients: NDArray[np.float64] = field(default_factory=lambda: np.zeros(1))
    bic: float = float("nan")


def _lagged(years: NDArray, mode_years: NDArray, mode: NDArray, lag: int) -> NDArray:
    """Mode value at ``year - lag`` for each year (NaN when unavailable)."""
    idx = years - lag - mode_years[0]
    ok = (idx >= 0) & (idx < mode.size)
    out = np.full(years.shape, np.nan)
    out[ok] = mode[idx[ok]]
    return out


def _design(years, modes: SeriesTable, chosen) -> NDArray:
    cols = [np.ones(years.size)]
    cols += [_lagged(years, modes.years, modes.column(name), lag) for name, lag in chosen]
    return np.column_stack(cols)


def bic_select_filter(temp: SeriesTable, temp_name: str, modes: SeriesTable, kmax: int) -> FilterSpec:
    """Choose (mode, lag) regressors by BIC on a common sample.

    Every subset with at most one lag ``0..kmax-1`` per mode is compared on
    the years after the first ``kmax`` observations of ``temp`` (and where
    all candidate lags exist); the winner is then refitted on all
    available years.
    """
    y_all = temp.column(temp_name)
    T = y_all.size
    if kmax < 1 or kmax >= T / 2:
        raise InvalidArgumentError(f"kmax must lie in [1, T/2), got {kmax} with T={T}")
    names = modes.names
    full = [(n, lag) for n in names for lag in range(kmax)]
    X_all = _design(temp.years, modes, full)
    sample = np.arange(T) >= kmax
    sample &= np.all(np.isfinite(X_all), axis=1)
    n_obs = int(sample.sum())
    if n_obs <= 1 + len(names):
        raise InvalidArgumentError("too few overlapping observations for BIC selection")
    y = y_all[sample]
    best = None
    for choice in itertools.product(*[[None, *range(kmax)] for _ in names]):
        chosen = tuple((n, lag) for n, lag in zip(names, choice) if lag is not None)
        X = _design(temp.years[sample], modes, chosen)
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        ssr = float(np.sum((y - X @ coef) ** 2))
        bic = n_obs * math.log(max(ssr, 1e-300) / n_obs) + X.shape[1] * math.log(n_obs)
        if best is None or bic < best[0] - 1e-12:
            best = (bic, chosen)
    bic, chosen = best
    years, _, coef = _filter_fit(temp.years, y_all, modes, chosen)
    return FilterSpec(kmax, chosen, coef, bic)


def _filter_fit(years, y, modes, chosen):
    X = _design(years, modes, chosen)
    ok = np.all(np.isfinite(X), axis=1)
    coef, *_ = np.linalg.lstsq(X[ok], y[ok], rcond=None)
    return years[ok], ok, coef


def filter_series(temp: SeriesTable, temp_name: str, modes: SeriesTable,
                  chosen: FilterSpec | Sequence[tuple[str, int]]) -> SeriesTable:
    """Remove the chosen mode regressors from a series, keeping its fitted constant.

    The regression is fitted on every year where the lagged modes exist,
    so applying the filter to its own output changes nothing.
    """
    chosen = tuple(chosen.chosen if isinstance(chosen, FilterSpec) else chosen)
    y = temp.column(temp_name)
    years, ok, coef = _filter_fit(temp.years, y, modes, chosen)
    X = _design(years, modes, chosen)
    out = y[ok] - X[:, 1:] @ coef[1:]
    return SeriesTable(years, {temp_name: out})


# ---------------------------------------------------------------------------
# analyses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TestCell:
    __test__ = False

    method: str
    statistic: float
    p_asymptotic: float
    p_bootstrap: float | None


@dataclass(frozen=True)
class CommonBreakRow:
    """One forcing/temperature pair tested for common break dates."""

    forcing: str
    temperature: str
    first_year: int
    last_year: int
    forcing_breaks: tuple[int, ...]
    temperature_breaks: tuple[int, ...]
    common_breaks: tuple[int, ...]
    tests: tuple[TestCell, ...]

    def as_dict(self) -> dict[str, str]:
        out = {
            "forcing": self.forcing, "temperature": self.temperature,
            "sample": f"{self.first_year}-{self.last_year}",
            "forcing_break": " ".join(map(str, self.forcing_breaks)),
            "temperature_break": " ".join(map(str, self.temperature_breaks)),
            "common_break": " ".join(map(str, self.common_breaks)),
        }
        for c in self.tests:
            key = c.method.lower()
            out[f"{key}_stat"] = f"{c.statistic:.3f}"
            out[f"{key}_p_asy"] = f"{c.p_asymptotic:.3f}"
            out[f"{key}_p_boot"] = "" if c.p_bootstrap is None else f"{c.p_bootstrap:.3f}"
        return out


def _years(y: MultiSeries, ks: Iterable[int]) -> tuple[int, ...]:
    return tuple(y.date_to_period(k) for k in ks)


def analyze_common_breaks(table: SeriesTable, forcing: str, temperature: str,
                          years: tuple[int, int] | None = None, breaks: int = 1,
                          methods: Sequence[str] = ("GLS_WALD", "LR"), cfg: SearchConfig | None = None,
                          boot: BootstrapConfig | None = None) -> CommonBreakRow:
    """Test that a forcing and a temperature series share their break dates.

    Break dates are reported in calendar years. The system estimate is
    shown for the FGLS-based tests; when only the OLS-Wald test is run,
    equation-by-equation estimates are shown instead.
    """
    cfg = cfg or SearchConfig()
    sub = table.slice(*(years or (None, None)))
    y = sub.to_multiseries([forcing, temperature])
    m = (breaks, breaks)
    restriction = common_break_restriction(m)
    if not methods:
        raise InvalidArgumentError("no test methods requested")
    reports = [bootstrap_test(mth, y, m, restriction, cfg, boot) if boot is not None
               else run_test(mth, y, m, restriction, cfg) for mth in methods]
    cells = tuple(TestCell(r.method, r.statistic, r.p_asymptotic, r.p_bootstrap) for r in reports)
    system = [r for r in reports if r.method != "OLS_WALD"]
    k_u = (system or reports)[0].k_unrestricted
    k_r = system_break_search(y, m, restriction, cfg)[0]
    return CommonBreakRow(forcing, temperature, int(sub.years[0]), int(sub.years[-1]),
                          _years(y, k_u.per_equation[0]), _years(y, k_u.per_equation[1]),
                          _years(y, k_r.per_equation[0]), cells)


@dataclass(frozen=True)
class HiatusRow:
    """Extra-break test in a temperature equation paired with a forcing series."""

    forcing: str
    temperature: str
    first_year: int
    last_year: int
    forcing_break: int
    statistic: float
    p_bootstrap: float | None
    temperature_break: int

    def as_dict(self) -> dict[str, str]:
        return {
            "forcing": self.forcing, "temperature": self.temperature,
            "sample": f"{self.first_year}-{self.last_year}",
            "forcing_break": str(self.forcing_break), "lr_stat": f"{self.statistic:.3f}",
            "p_boot": "" if self.p_bootstrap is None else f"{self.p_bootstrap:.3f}",
            "temperature_break": str(self.temperature_break),
        }


def analyze_hiatus(table: SeriesTable, forcing: str, temperature: str,
                   years: tuple[int, int] | None = None, trim: float = DEFAULT_TRIM,
                   cfg: SearchConfig | None = None, boot: BootstrapConfig | None = None) -> HiatusRow:
    """No break versus one break in the temperature equation, forcing break estimated jointly."""
    sub = table.slice(*(years or (None, None)))
    y = sub.to_multiseries([forcing, temperature])
    rep = extra_break_test(y, (1, 0), equation=1, trim=trim, cfg=cfg, boot=boot)
    return HiatusRow(forcing, temperature, int(sub.years[0]), int(sub.years[-1]),
                     y.date_to_period(rep.base_breaks.per_equation[0][0]), rep.statistic,
                     rep.p_bootstrap, y.date_to_period(rep.nu_hat))


# ---------------------------------------------------------------------------
# report formatting
# ---------------------------------------------------------------------------

def format_rows(rows: Sequence[Mapping[str, str]], fmt: str = "text") -> str:
    """Render dict rows as CSV or as a fixed-width text table."""
    if not rows:
        return ""
    keys = list(rows[0])
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()
    if fmt != "text":
        raise InvalidArgumentError(f"unknown format {fmt!r}")
    width = {k: max(len(k), *(len(str(r[k])) for r in rows)) for k in keys}
    lines = ["  ".join(k.rjust(width[k]) for k in keys)]
    lines.append("  ".join("-" * width[k] for k in keys))
    lines += ["  ".join(str(r[k]).rjust(width[k]) for k in keys) for r in rows]
    return "\n".join(lines) + "\n"


def fraction_restriction(kind: str, y: MultiSeries, counts: Sequence[int]) -> RestrictionSet:
    """Parse ``common``, ``fixed:<year>[,<year>...]`` or ``offset:<c>`` into a restriction.

    ``fixed`` years are matched to the stacked breaks in order; ``offset``
    fixes ``lambda_0j - lambda_1j = c`` between the first two equations.
    """
    counts = [int(c) for c in counts]
    if kind == "common":
        return common_break_restriction(counts)
    head, _, arg = kind.partition(":")
    if head == "fixed" and arg:
        try:
            yrs = [int(v) for v in arg.split(",")]
        except ValueError:
            raise InvalidArgumentError(f"bad year list in {kind!r}") from None
        if len(yrs) != sum(counts):
            raise InvalidArgumentError(f"{len(yrs)} years given for {sum(counts)} breaks")
        return RestrictionSet.fixed_dates([(yr - y.start_period + 1) / y.T for yr in yrs])
    if head == "offset" and arg:
        try:
            c = float(arg)
        except ValueError:
            raise InvalidArgumentError(f"bad offset in {kind!r}") from None
        if len(counts) < 2 or counts[0] != counts[1] or counts[0] == 0:
            raise InvalidArgumentError("offset restriction needs two equations with equal break counts")
        return RestrictionSet.fixed_offsets([(j, counts[0] + j, c) for j in range(counts[0])], sum(counts))
    raise InvalidArgumentError(f"unknown restriction {kind!r}; use common, fixed:<years> or offset:<c>")


# ---------------------------------------------------------------------------
# command-line interface
# ---------------------------------------------------------------------------

def _range(text: str) -> tuple[int, int]:
    try:
        a, b = text.split(":")
        return int(a), int(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected <y1:y2>, got {text!r}") from None


def _csv_list(text: str) -> list[str]:
    return [s.strip() for s in text.split(",") if s.strip()]


def _int_list(text: str) -> list[int]:
    try:
        return [int(s) for s in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser, boot_reps: int = 999) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--boot-reps", type=int, default=boot_reps,
                   help=f"bootstrap replications; 0 skips the bootstrap (default {boot_reps})")
    p.add_argument("--range", type=_range, default=None, metavar="Y1:Y2", help="sample years")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--workers", type=int, default=1, help="worker processes for bootstrap replicates")
    p.add_argument("--trim", type=float, default=0.05, help="estimation trimming fraction")


def _add_data(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", action="append", required=True, metavar="CSV",
                   help="CSV file with header year,<name>,...; repeat to join files")
    p.add_argument("--series", type=_csv_list, required=True, help="comma-separated column names")
    p.add_argument("--breaks", type=_int_list, required=True, help="breaks per series, e.g. 1,1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="jointbreaks",
                                     description="Common slope breaks in systems of trending series.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate break dates")
    _add_data(p)
    _add_common(p, boot_reps=0)
    p.add_argument("--estimator", choices=("fgls", "ols"), default="fgls")
    p.add_argument("--restriction", default=None, help="common | fixed:<years> | offset:<c>")

    p = sub.add_parser("test-common", help="test restrictions on break dates")
    _add_data(p)
    _add_common(p)
    p.add_argument("--restriction", default="common", help="common | fixed:<years> | offset:<c>")
    p.add_argument("--tests", type=_csv_list, default=["LR", "GLS_WALD", "OLS_WALD"],
                   help=f"subset of {','.join(METHODS)}")

    p = sub.add_parser("test-extra", help="test for one additional break")
    _add_data(p)
    _add_common(p)
    p.add_argument("--equation", default=None,
                   help="series receiving the extra break (name or 0-based index); default: sup over all")
    p.add_argument("--extra-trim", type=float, default=DEFAULT_TRIM,
                   help="distance of the extra break from sample ends and existing breaks")

    p = sub.add_parser("filter", help="filter oscillation modes out of a series")
    p.add_argument("--data", required=True, metavar="CSV", help="file holding the series")
    p.add_argument("--series", required=True)
    p.add_argument("--modes-data", required=True, metavar="CSV", help="file holding the modes")
    p.add_argument("--modes", type=_csv_list, required=True, help="comma-separated mode columns")
    p.add_argument("--kmax", type=int, default=2, help="lags 0..kmax-1 are candidates")
    p.add_argument("--lags", default=None,
                   help="skip selection and use these (mode:lag,...) regressors")
    p.add_argument("--range", type=_range, default=None, metavar="Y1:Y2")
    p.add_argument("--format", choices=("text", "csv"), default="csv")
    p.add_argument("--seed", type=int, default=0, help=argparse.SUPPRESS)
    p.add_argument("--boot-reps", type=int, default=0, help=argparse.SUPPRESS)

    p = sub.add_parser("mc-table", help="simulated rejection frequencies")
    p.add_argument("--test", choices=METHODS, default="LR")
    p.add_argument("--delta", type=float, default=0.5)
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--designs", default=None,
                   help="alpha/rho pairs as a:r;a:r;... (default: the 3x3 grid)")
    p.add_argument("--hypotheses", type=_int_list, default=[1, 2, 3, 4])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--boot-reps", type=int, default=1,
                   help="0 disables the warp-speed bootstrap column (default on)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.add_argument("--range", type=_range, default=None, help=argparse.SUPPRESS)
    return parser


def _system(args) -> tuple:
    table = load_tables(args.data)
    if args.range:
        table = table.slice(*args.range)
    y = table.to_multiseries(args.series)
    if len(args.breaks) != y.n:
        raise InvalidArgumentError(f"{len(args.breaks)} break counts for {y.n} series")
    return y, tuple(args.breaks), SearchConfig(trim_fraction=args.trim)


def _boot(args) -> BootstrapConfig | None:
    if args.boot_reps <= 0:
        return None
    return BootstrapConfig(replications=args.boot_reps, seed=args.seed, workers=args.workers)


def _fmt_p(p) -> str:
    return "" if p is None else f"{p:.3f}"


def cmd_estimate(args) -> str:
    y, m, cfg = _system(args)
    cfg = replace(cfg, estimator=args.estimator)
    restriction = fraction_restriction(args.restriction, y, m) if args.restriction else None
    k, fit = system_break_search(y, m, restriction, cfg)
    rows = []
    for name, ks, p in zip(y.labels, k.per_equation, fit.params):
        rows.append({"series": name, "breaks": " ".join(str(y.date_to_period(d)) for d in ks),
                     "intercept": f"{p.mu:.6g}", "slope": f"{p.beta:.6g}",
                     "slope_changes": " ".join(f"{d:.6g}" for d in p.delta)})
    out = format_rows(rows, args.format)
    if args.format == "text":
        out += f"log det Sigma = {fit.logdet:.6f}  loglik = {fit.loglik:.4f}\n"
    return out


def cmd_test_common(args) -> str:
    y, m, cfg = _system(args)
    restriction = fraction_restriction(args.restriction, y, m)
    boot = _boot(args)
    rows = []
    for method in args.tests:
        if method not in METHODS:
            raise InvalidArgumentError(f"unknown test {method!r}; choose from {', '.join(METHODS)}")
        rep = (bootstrap_test(method, y, m, restriction, cfg, boot) if boot
               else run_test(method, y, m, restriction, cfg))
        row = {"test": method, "statistic": f"{rep.statistic:.4f}", "df": str(rep.df),
               "p_asymptotic": f"{rep.p_asymptotic:.4f}", "p_bootstrap": _fmt_p(rep.p_bootstrap),
               "unrestricted": "; ".join(" ".join(str(y.date_to_period(d)) for d in ks)
                                         for ks in rep.k_unrestricted.per_equation),
               "restricted": "" if rep.k_restricted is None else "; ".join(
                   " ".join(str(y.date_to_period(d)) for d in ks) for ks in rep.k_restricted.per_equation),
               "flags": ",".join(f for f, on in (("boundary", rep.boundary),
                                                 ("serial-correlation", rep.unreliable)) if on)}
        rows.append(row)
    return format_rows(rows, args.format)


def cmd_test_extra(args) -> str:
    y, m, cfg = _system(args)
    eq = None
    if args.equation is not None:
        if args.equation in y.labels:
            eq = list(y.labels).index(args.equation)
        elif args.equation.isdigit() and int(args.equation) < y.n:
            eq = int(args.equation)
        else:
            raise InvalidArgumentError(f"unknown equation {args.equation!r}")
    rep = extra_break_test(y, m, eq, args.extra_trim, cfg, _boot(args))
    row = {"equation": y.labels[rep.equation_hat], "statistic": f"{rep.statistic:.4f}",
           "extra_break": str(y.date_to_period(rep.nu_hat)), "p_bootstrap": _fmt_p(rep.p_bootstrap),
           "maintained": "; ".join(" ".join(str(y.date_to_period(d)) for d in ks)
                                   for ks in rep.base_breaks.per_equation)}
    return format_rows([row], args.format)


def _parse_lags(text: str) -> list[tuple[str, int]]:
    out = []
    for item in _csv_list(text):
        name, _, lag = item.partition(":")
        try:
            out.append((name, int(lag)))
        except ValueError:
            raise InvalidArgumentError(f"bad regressor {item!r}; expected mode:lag") from None
    return out


def cmd_filter(args) -> str:
    temp = load_series(args.data, [args.series])
    modes = load_series(args.modes_data, args.modes)
    if args.lags:
        chosen = _parse_lags(args.lags)
        note = "user-specified"
    else:
        spec = bic_select_filter(temp, args.series, modes, args.kmax)
        chosen = list(spec.chosen)
        note = f"BIC (kmax={args.kmax})"
    out: SeriesTable = filter_series(temp, args.series, modes, chosen)
    if args.range:
        out = out.slice(*args.range)
    logging.getLogger(__name__).info("filter regressors (%s): %s", note,
                                     ", ".join(f"{n}:{lag}" for n, lag in chosen) or "none")
    if args.format == "csv":
        return out.to_csv()
    rows = [{"year": str(int(yr)), args.series: f"{v:.6f}"} for yr, v in zip(out.years, out.column(args.series))]
    head = f"regressors ({note}): " + (", ".join(f"{n} lag {lag}" for n, lag in chosen) or "none") + "\n"
    return head + format_rows(rows, "text")


def _designs(text: str | None):
    if not text:
        return list(ALPHA_RHO_GRID)
    try:
        return [tuple(float(v) for v in item.split(":")) for item in text.split(";") if item]
    except ValueError:
        raise InvalidArgumentError(f"bad design list {text!r}; expected a:r;a:r") from None


def cmd_mc_table(args) -> str:
    specs = [replace(s, T=args.T, break_dates=(args.T // 2, args.T // 2))
             for s in design_grid(args.delta, args.T, _designs(args.designs))]
    boot = BootstrapConfig(warp_speed=True, seed=args.seed) if args.boot_reps > 0 else None
    table = run_table([args.test], specs, args.reps, boot, hypotheses=args.hypotheses, seed=args.seed,
                      workers=args.workers)
    return table.to_csv() if args.format == "csv" else table.to_text()


COMMANDS = {"estimate": cmd_estimate, "test-common": cmd_test_common, "test-extra": cmd_test_extra,
            "filter": cmd_filter, "mc-table": cmd_mc_table}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        sys.stdout.write(COMMANDS[args.command](args))
    except JointBreaksError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
