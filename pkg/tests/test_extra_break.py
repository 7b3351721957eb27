import numpy as np
import pytest

from jointbreaks.bootstrap import BootstrapConfig
from jointbreaks.errors import InvalidArgumentError
from jointbreaks.extra_break import admissible_grid, extra_break_test, lr_extra_break, sup_lr_extra_break
from jointbreaks.trend_model import BreakVector, EquationParams, MultiSeries, evaluate_trend


def _sample(seed, extra_eq=1, nu=70, T=100):
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(2):
        if i == 0:
            rows.append(evaluate_trend(EquationParams(0, 0.02, [0.5]), [40], T))
        elif extra_eq is not None and i == extra_eq:
            rows.append(evaluate_trend(EquationParams(0, 0.02, [1.0]), [nu], T))
        else:
            rows.append(0.02 * np.arange(1, T + 1.0))
    return MultiSeries(np.vstack(rows) + 0.1 * rng.standard_normal((2, T)))


def test_admissible_grid():
    g = admissible_grid(BreakVector(((50,),)), 0, 0.1, 100)
    assert g.min() == 10 and g.max() == 90
    assert not np.any((g > 40) & (g < 60))
    with pytest.raises(InvalidArgumentError):
        admissible_grid(BreakVector(((50,),)), 0, 0.45, 100)


def test_lr_extra_locates_break():
    y = _sample(0)
    rep = lr_extra_break(y, BreakVector(((40,), ())), 1)
    assert abs(rep.nu_hat - 70) <= 3
    assert rep.statistic == pytest.approx(rep.profile.max())
    assert np.all(rep.profile >= 0)


def test_sup_lr_picks_equation():
    y = _sample(1)
    rep = sup_lr_extra_break(y, BreakVector(((40,), ())))
    assert rep.equation_hat == 1


def test_profile_equals_logdet_difference():
    from jointbreaks.break_search import fgls_fit

    y = _sample(2)
    k = BreakVector(((40,), ()))
    rep = lr_extra_break(y, k, 1)
    base = fgls_fit(y, k).logdet
    for h in rep.grid[::17]:
        alt = fgls_fit(y, BreakVector(((40,), (int(h),)))).logdet
        a = int(np.flatnonzero(rep.grid == h)[0])
        assert rep.profile[a] == pytest.approx(max(0.0, y.T * (base - alt)), abs=1e-6)


def test_extra_break_test_bootstrap():
    y = _sample(3)
    rep = extra_break_test(y, (1, 0), equation=1, boot=BootstrapConfig(replications=9, kilian_reps=10))
    assert rep.p_bootstrap == pytest.approx(0.1)


def test_admissible_grid_examples():
    g = admissible_grid(BreakVector(((50,),)), 0, 0.1, 100)
    assert g.tolist() == list(range(10, 41)) + list(range(60, 91))
    g = admissible_grid(BreakVector(((50,), ())), 1, 0.15, 100)
    assert g.tolist() == list(range(15, 86))


def test_statistic_nonnegative_without_extra_break():
    for s in range(5):
        y = _sample(10 + s, extra_eq=None)
        rep = sup_lr_extra_break(y, BreakVector(((40,), ())))
        assert rep.statistic >= 0 and np.all(rep.profile >= 0)


def test_quarter_sample_break_located():
    hits = 0
    for s in range(200):
        y = _sample(500 + s, nu=25)
        k_hat = BreakVector(((40,), ()))
        hits += abs(lr_extra_break(y, k_hat, 1).nu_hat - 25) <= 3
    assert hits >= 190


def test_single_equation_sup_equals_lr():
    y = _sample(4).select([0])
    k = BreakVector(((40,),))
    a, b = sup_lr_extra_break(y, k), lr_extra_break(y, k, 0)
    assert (a.statistic, a.nu_hat, a.equation_hat) == (b.statistic, b.nu_hat, 0)


def test_duplicated_equations_tie_to_lowest_index():
    z = _sample(5).values[1]
    y = MultiSeries(np.vstack([z, z]))
    k = BreakVector(((), ()))
    reps = [lr_extra_break(y, k, i) for i in range(2)]
    np.testing.assert_array_equal(reps[0].profile, reps[1].profile)
    assert sup_lr_extra_break(y, k).equation_hat == 0


def test_profile_affine_invariant():
    y = _sample(6)
    t = np.arange(1, 101.0)
    z = y.with_values(y.values + np.vstack([3 + 0.1 * t, -2 + 0.4 * t]))
    k = BreakVector(((40,), ()))
    a, b = lr_extra_break(y, k, 1), lr_extra_break(z, k, 1)
    np.testing.assert_allclose(b.profile, a.profile, rtol=1e-6, atol=1e-8)


def test_extra_break_respects_trim():
    y = _sample(7, nu=45)
    rep = lr_extra_break(y, BreakVector(((40,), (60,))), 1, trim=0.1)
    assert abs(rep.nu_hat - 60) >= 10 and 10 <= rep.nu_hat <= 90
