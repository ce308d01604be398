import itertools
import math
from statistics import NormalDist

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from namerisk.fixtures import load_fixture
from namerisk.ga_analytic import XI_SP, ga_approx
from namerisk.mtm import (BondSpec, MtmError, build_mtm_model, conditional_moments, ga_mtm_approx, price_bond,
                          state_price_table, state_probabilities)
from namerisk.params import RiskParams
from namerisk.portfolio import LgdSpec
from namerisk.ratings import RatingScale, TransitionMatrix, thresholds
from namerisk.yieldcurve import NssParams

from conftest import make_portfolio

N01 = NormalDist()


def test_state_probabilities_oracle(tm):
    g = tm.scale.index("B")
    got = state_probabilities(g, 0.35, -3.09, thresholds(tm))
    row = [float(v) for v in tm.p[g]]
    cum, prev, expected = 0.0, 0.0, []
    for s in range(len(row)):
        cum += row[s]
        if s == len(row) - 1:
            upper = 1.0
        else:
            c = N01.inv_cdf(min(max(cum, 1e-12), 1 - 1e-12))
            upper = N01.cdf((c + 3.09 * math.sqrt(0.35)) / math.sqrt(0.65))
        expected.append(upper - prev)
        prev = upper
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)
    assert got[0] > 0.2


def test_state_probabilities_limits(tm):
    table = thresholds(tm)
    g = tm.scale.index("BB")
    np.testing.assert_allclose(state_probabilities(g, 0.0, 2.5, table), tm.p[g], atol=1e-11)
    assert state_probabilities(g, 0.35, -40.0, table)[0] == pytest.approx(1.0, abs=1e-12)


def test_state_probabilities_sum_to_one(tm):
    table = thresholds(tm)
    for g in range(1, tm.scale.S + 1):
        for rho in (0.0, 0.12, 0.35, 0.9):
            for x in np.linspace(-6, 6, 13):
                pr = state_probabilities(g, rho, x, table)
                assert pr.min() >= 0
                assert abs(pr.sum() - 1.0) < 1e-10


def _cum_pd_oracle(rows, g, t):
    """Cumulative PD by repeated row-vector products, linear between whole years."""
    lo = int(math.floor(t))
    vec = [1.0 if i == g else 0.0 for i in range(len(rows))]
    vals = [vec[0]]
    for _ in range(lo + 1):
        vec = [sum(vec[k] * rows[k][j] for k in range(len(rows))) for j in range(len(rows))]
        vals.append(vec[0])
    frac = t - lo
    return vals[lo] * (1 - frac) + vals[lo + 1] * frac


def _price_oracle(tm, grade, coupon, maturity, accrual, start, rate, elgd, psi, rho):
    rows = [[float(v) for v in r] for r in tm.p]
    g = tm.scale.index(grade)
    dates = [maturity - accrual * k for k in range(int(round(maturity / accrual)))][::-1]
    dates = [d for d in dates if d >= start - 1e-12]

    def Q(u):
        if u <= 0:
            return 1.0
        ph = min(max(_cum_pd_oracle(rows, g, u), 1e-6), 1 - 1e-6)
        return 1.0 - N01.cdf(N01.inv_cdf(ph) + psi * math.sqrt(u) * math.sqrt(rho))

    price, prev_u = 0.0, 0.0
    for d in dates:
        u = d - start
        df = math.exp(-rate * u)
        price += coupon * accrual * df * Q(u)
        price += (1 - elgd) * df * (Q(prev_u) - Q(u))
        prev_u = u
    price += math.exp(-rate * (dates[-1] - start)) * Q(dates[-1] - start)
    return price


def test_price_bond_cashflow_oracle(tm, flat3):
    spec = BondSpec(0.01, 3.0, 0.5, 1.0)
    lgd = LgdSpec(0.45)
    p0 = price_bond(spec, "BB", flat3, tm, lgd, 0.4, 0.35)
    assert p0 == pytest.approx(_price_oracle(tm, "BB", 0.01, 3.0, 0.5, 0.0, 0.03, 0.45, 0.4, 0.35), rel=1e-12)
    for state in ("BBB", "BB", "B-", "Cs"):
        pT = price_bond(spec, "BB", flat3, tm, lgd, 0.4, 0.35, state=state)
        assert pT == pytest.approx(_price_oracle(tm, state, 0.01, 3.0, 0.5, 1.0, 0.03, 0.45, 0.4, 0.35), rel=1e-12)


def test_default_state_recovery(tm, flat3):
    spec = BondSpec(0.01, 3.0)
    assert price_bond(spec, "BB", flat3, tm, LgdSpec(0.45), 0.4, 0.35, state="D") == pytest.approx(0.55, abs=1e-15)


def test_early_default_can_raise_a_deep_discount_price(tm, flat3):
    spec = BondSpec(0.0, 7.0)
    low, high = (price_bond(spec, "A", flat3, tm, LgdSpec(0.05), psi, 0.3) for psi in (0.4, 1.0))
    assert high > low


def test_risk_free_limit(flat3):
    scale = RatingScale.from_best_to_worst(["A", "D"])
    safe = TransitionMatrix(scale, np.array([[1.0, 0.0], [0.0, 1.0]]))
    spec = BondSpec(0.04, 5.0, 0.5)
    dates = np.arange(0.5, 5.0 + 1e-9, 0.5)
    pure = float(np.sum(0.04 * 0.5 * np.exp(-0.03 * dates)) + math.exp(-0.15))
    # the 1e-6 PD floor leaves a trace of credit risk
    assert price_bond(spec, "A", flat3, safe, LgdSpec(0.45), 0.4, 0.35) == pytest.approx(pure, rel=1e-4)
    assert price_bond(spec, "A", flat3, safe, LgdSpec(0.0), 0.4, 0.35) == pytest.approx(pure, rel=1e-5)


def test_bond_schedule_and_errors(tm, flat3):
    np.testing.assert_allclose(BondSpec(0.01, 3.0).payment_dates(), [0.5, 1, 1.5, 2, 2.5, 3])
    np.testing.assert_allclose(BondSpec(0.01, 1.25).payment_dates(), [0.25, 0.75, 1.25])
    with pytest.raises(MtmError):
        price_bond(BondSpec(0.01, 0.5), "BB", flat3, tm, LgdSpec(), 0.4, 0.35, state="BB")
    with pytest.raises(MtmError):
        BondSpec(0.01, 0.0)


@settings(max_examples=40, deadline=None)
@given(grade=st.sampled_from(["A", "BBB", "BB", "B", "Cs"]), elgd=st.floats(0.05, 0.9),
       coupon=st.floats(0.0, 0.1), psi=st.floats(0.05, 1.0), maturity=st.sampled_from([1.5, 3.0, 7.0]))
def test_price_monotone_in_lgd_and_coupon(tm, flat3, grade, elgd, coupon, psi, maturity):
    spec = BondSpec(coupon, maturity)
    base = price_bond(spec, grade, flat3, tm, LgdSpec(elgd), psi, 0.3)
    assert base > 0
    assert price_bond(spec, grade, flat3, tm, LgdSpec(min(elgd + 0.05, 1.0)), psi, 0.3) < base
    assert price_bond(BondSpec(coupon + 0.01, maturity), grade, flat3, tm, LgdSpec(elgd), psi, 0.3) > base


@settings(max_examples=40, deadline=None)
@given(grade=st.sampled_from(["A", "BBB", "BB", "B", "Cs"]), elgd=st.floats(0.3, 0.9),
       coupon=st.floats(0.03, 0.1), psi=st.floats(0.05, 1.0), maturity=st.sampled_from([1.5, 3.0, 7.0]))
def test_price_falls_with_risk_neutral_pd(tm, flat3, grade, elgd, coupon, psi, maturity):
    # holds while the recovery is worth less than the surviving bond (coupon at or above
    # the 3% curve); a deep-discount bond gains from early default under recovery of face
    spec = BondSpec(coupon, maturity)
    base = price_bond(spec, grade, flat3, tm, LgdSpec(elgd), psi, 0.3)
    assert price_bond(spec, grade, flat3, tm, LgdSpec(elgd), psi * 1.5, 0.3) < base


def _monotone_matrix():
    # stochastically monotone: every cumulative sum from the default end falls as the grade improves
    scale = RatingScale.from_best_to_worst(["A", "B", "C", "E", "D"])
    p = np.array([
        [1.0, 0.0, 0.0, 0.0, 0.0],
        [0.30, 0.50, 0.15, 0.04, 0.01],
        [0.05, 0.10, 0.70, 0.10, 0.05],
        [0.01, 0.02, 0.10, 0.77, 0.10],
        [0.001, 0.004, 0.015, 0.08, 0.90],
    ])
    return TransitionMatrix(scale, p)


@pytest.mark.parametrize("maturity", [1.0, 3.0, 8.0])
@pytest.mark.parametrize("grade", ["A", "C", "E"])
def test_horizon_prices_rise_with_rating(flat3, maturity, grade):
    tm = _monotone_matrix()
    cum = np.cumsum(tm.p[1:], axis=1)
    assert np.all(np.diff(cum, axis=0) <= 1e-15)
    table = state_price_table(BondSpec(0.01, maturity), tm.scale.index(grade), flat3, tm, LgdSpec(0.45), 0.4,
                              lambda s: 0.24)
    assert table.p0 > 0
    assert np.all(np.diff(table.pT) >= 0)


def _model(p, tm, curve, params, mode="ratings"):
    return build_mtm_model(p, tm, curve, params, mode)


def test_conditional_mean_flat_without_correlation(tm, flat3):
    p = make_portfolio([2, 1], ["BB", "B"], maturity=3.0)
    model = _model(p, tm, flat3, RiskParams(rho_mode="fixed", rho_fixed=1e-14))
    mus = [conditional_moments(model, x).mu for x in (-4.0, 0.0, 3.0)]
    assert max(mus) - min(mus) < 1e-5


@pytest.mark.parametrize("nu", [0.0, 0.25])
@pytest.mark.parametrize("x", [-3.09, -1.0, 0.7])
def test_two_borrower_enumeration(tm, flat3, nu, x):
    p = make_portfolio([0.7, 0.3], ["BBB-", "B"], maturity=4.0, nu=nu)
    model = _model(p, tm, flat3, RiskParams(nu=nu))
    mom = conditional_moments(model, x)
    probs = model.state_probs(x)
    vlgd2 = nu * 0.45 * 0.55
    S1 = probs.shape[1]
    mean = second = 0.0
    for s1, s2 in itertools.product(range(S1), range(S1)):
        w = probs[0, s1] * probs[1, s2]
        r = model.shares[0] * model.ratios[0, s1] + model.shares[1] * model.ratios[1, s2]
        # a default state carries extra LGD variance on its recovery
        extra = sum(model.shares[i] ** 2 * vlgd2 / model.p0[i] ** 2 for i, s in enumerate((s1, s2)) if s == 0)
        mean += w * r
        second += w * (r * r + extra)
    var = model.discount**2 * (second - mean * mean)
    assert mom.mu == pytest.approx(mean, rel=1e-12)
    assert mom.var == pytest.approx(var, rel=1e-9, abs=1e-12)
    np.testing.assert_allclose(mom.mu_n, np.sum(model.ratios * probs, axis=1), rtol=1e-14)


def test_degenerate_row_has_no_variance(flat3):
    scale = RatingScale.from_best_to_worst(["A", "B", "D"])
    tm = TransitionMatrix(scale, np.array([[1, 0, 0], [0.1, 0.8, 0.1], [0.0, 0.0, 1.0]]))
    p = make_portfolio([1.0], ["A"], maturity=3.0)
    mom = conditional_moments(_model(p, tm, flat3, RiskParams()), 0.0)
    assert mom.var < 1e-10


def test_ga_mtm_granularity_limit(tm, curve):
    params = RiskParams()
    ga = ga_mtm_approx(_model(make_portfolio([1.0] * 1000, "BB"), tm, curve, params))
    assert 0 < ga < 0.005


def test_ga_mtm_scale_invariance(tm, curve):
    p = load_fixture("DEMO10").with_maturity(3.0)
    params = RiskParams()
    a = ga_mtm_approx(_model(p, tm, curve, params))
    b = ga_mtm_approx(_model(p.scaled(2.0), tm, curve, params))
    assert b == pytest.approx(a, rel=1e-12)


@pytest.mark.parametrize("grade", ["BBB", "B"])
def test_ga_mtm_halves_on_split(tm, curve, grade):
    params = RiskParams()
    a = ga_mtm_approx(_model(make_portfolio([1.0] * 10, grade, maturity=3.0), tm, curve, params))
    b = ga_mtm_approx(_model(make_portfolio([0.5] * 20, grade, maturity=3.0), tm, curve, params))
    assert b == pytest.approx(a / 2, rel=0.2)


def test_default_mode_near_actuarial_analytic(tm, curve):
    p = load_fixture("DEMO10").with_maturity(1.0)
    params = RiskParams(xi=XI_SP)
    analytic = ga_approx(p, tm, params, maturity=1.0).ga_full
    mtm = ga_mtm_approx(_model(p, tm, curve, params, "default"))
    assert mtm == pytest.approx(analytic, rel=0.15)


def test_default_mode_two_states(tm, curve):
    p = make_portfolio([1, 1], ["BB", "B"], maturity=3.0)
    model = _model(p, tm, curve, RiskParams(), "default")
    pr = model.state_probs(0.0)
    # only default and the current grade carry mass
    assert np.count_nonzero(pr[0] > 1e-9) == 2 and np.count_nonzero(pr[1] > 1e-9) == 2


def test_flat_conditional_loss_raises(tm, flat3):
    p = make_portfolio([1.0, 1.0], "BB", maturity=2.0)
    model = _model(p, tm, flat3, RiskParams(rho_mode="fixed", rho_fixed=1e-30))
    with pytest.raises(MtmError):
        ga_mtm_approx(model)


def test_unknown_mode(tm, flat3):
    with pytest.raises(MtmError):
        build_mtm_model(make_portfolio([1.0], "BB"), tm, flat3, RiskParams(), "bogus")
