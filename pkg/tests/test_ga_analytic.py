import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from namerisk.fixtures import load_table1_fixtures
from namerisk.ga_analytic import XI_SP, delta_factor, ga_approx, gamma_quantile, relative_ga
from namerisk.params import RiskParams
from namerisk.portfolio import LgdSpec

from conftest import make_portfolio

mp.mp.dps = 30


def _gamma_quantile_mp(xi, q):
    xi, q = mp.mpf(xi), mp.mpf(q)
    return mp.findroot(lambda x: mp.gammainc(xi, 0, xi * x, regularized=True) - q, (mp.mpf(1), mp.mpf(60)),
                       solver="illinois", tol=mp.mpf(10) ** -25)


def test_gamma_quantile_oracle():
    expected = _gamma_quantile_mp("0.25", "0.999")
    assert gamma_quantile(0.25, 0.999) == pytest.approx(float(expected), rel=1e-11)
    assert gamma_quantile(0.25, 0.999) == pytest.approx(17.5057770315, rel=1e-10)


def test_gamma_quantile_against_draws():
    x = np.random.default_rng(11).gamma(0.25, 1 / 0.25, size=10_000_000)
    assert abs(x.mean() - 1.0) < 0.005
    assert np.quantile(x, 0.999) == pytest.approx(gamma_quantile(0.25, 0.999), rel=0.02)


def test_gamma_quantile_exponential_median():
    assert gamma_quantile(1.0, 0.5) == pytest.approx(math.log(2.0), rel=1e-12)


def test_gamma_quantile_shrinks_with_precision():
    a = [gamma_quantile(xi, 0.999) for xi in (0.25, 4.0, 100.0)]
    assert a[0] > a[1] > a[2] > 1.0


def test_delta_examples():
    assert delta_factor(0.3, 0.999, alpha=1.0) == 0.0
    alpha = gamma_quantile(1.0, 0.999)
    assert delta_factor(1.0, 0.999) == pytest.approx(alpha - 1.0, rel=1e-14)
    a = _gamma_quantile_mp("0.25", "0.999")
    expected = (a - 1) * (mp.mpf("0.25") + mp.mpf("0.75") / a)
    assert delta_factor(0.25, 0.999) == pytest.approx(float(expected), rel=1e-11)


def test_gamma_quantile_errors():
    with pytest.raises(ValueError):
        gamma_quantile(0.0, 0.999)
    with pytest.raises(ValueError):
        gamma_quantile(0.25, 1.0)


def _ga_oracle(a, pd, elgd, nu, xi, q, m=1):
    """Term-by-term evaluation of the analytic GA, all in mpmath."""
    q = mp.mpf(q)
    alpha = _gamma_quantile_mp(xi, q)
    delta = (alpha - 1) * (mp.mpf(xi) + (1 - mp.mpf(xi)) / alpha)
    tot = sum(mp.mpf(x) for x in a)
    rows = []
    for an, p in zip(a, pd):
        p = mp.mpf(p)
        w = (1 - mp.e ** (-50 * p)) / (1 - mp.e**-50)
        rho = mp.mpf("0.12") * w + mp.mpf("0.24") * (1 - w)
        cpd = mp.ncdf((mp.sqrt(2) * mp.erfinv(2 * p - 1) + mp.sqrt(rho) * mp.sqrt(2) * mp.erfinv(2 * q - 1))
                      / mp.sqrt(1 - rho))
        E = mp.mpf(elgd)
        V2 = mp.mpf(nu) * E * (1 - E)
        K = E * (cpd - p)
        R = E * p
        C = (V2 + E**2) / E
        rows.append((mp.mpf(an) / tot, K, R, C, V2 / E**2))
    k_star = sum(s * K for s, K, *_ in rows)
    full = simple = mp.mpf(0)
    for s, K, R, C, v in rows:
        simple += s**2 * (delta * C * (K + R) - K * C)
        full += s**2 * (delta * C * (K + R) + delta * (K + R) ** 2 * v - K * (C + 2 * (K + R) * v))
    return float(full / (2 * k_star)), float(simple / (2 * k_star)), float(k_star)


def _two_grade_matrix():
    from namerisk.ratings import RatingScale, TransitionMatrix
    scale = RatingScale.from_best_to_worst(["H", "L", "D"])
    return TransitionMatrix(scale, np.array([[1, 0, 0], [0.02, 0.98, 0.0], [0.005, 0.0, 0.995]]))


@pytest.mark.parametrize("nu", [0.0, 0.25])
def test_two_borrower_oracle(nu):
    tm = _two_grade_matrix()
    p = make_portfolio([0.9, 0.1], ["L", "H"], nu=nu)
    rep = ga_approx(p, tm, RiskParams(xi=0.25, nu=nu))
    full, simple, k_star = _ga_oracle([0.9, 0.1], ["0.02", "0.005"], "0.45", nu, "0.25", "0.999")
    assert rep.ga_full == pytest.approx(full, rel=1e-10)
    assert rep.ga_simplified == pytest.approx(simple, rel=1e-10)
    assert rep.k_star == pytest.approx(k_star, rel=1e-12)
    assert rep.contributions_full.sum() == pytest.approx(rep.ga_full, rel=1e-13)
    if nu == 0.0:
        assert rep.ga_full == rep.ga_simplified


def test_nu_zero_identity_on_fixtures(tm):
    for name, p in load_table1_fixtures(tm).items():
        rep = ga_approx(p, tm, RiskParams(), maturity=1.0)
        assert rep.ga_full == rep.ga_simplified, name


def test_simplified_below_full_with_random_lgd(tm):
    for name, p in load_table1_fixtures(tm, LgdSpec(0.45, 0.25)).items():
        rep = ga_approx(p, tm, RiskParams(nu=0.25), maturity=1.0)
        assert rep.ga_simplified <= rep.ga_full, name


grades = st.sampled_from(["AA-", "A", "BBB", "BB+", "BB-", "B", "B-", "Cs"])
books = st.lists(st.tuples(st.floats(0.5, 100.0), grades), min_size=2, max_size=12)


@settings(max_examples=50, deadline=None)
@given(books, st.floats(1e-2, 1e3), st.sampled_from([0.0, 0.25]))
def test_scale_invariance(tm, book, lam, nu):
    p = make_portfolio([e for e, _ in book], [g for _, g in book], nu=nu)
    params = RiskParams(nu=nu)
    a, b = ga_approx(p, tm, params), ga_approx(p.scaled(lam), tm, params)
    assert b.ga_full == pytest.approx(a.ga_full, rel=1e-12)
    assert b.ga_simplified == pytest.approx(a.ga_simplified, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(books, st.data(), st.sampled_from([0.0, 0.25]))
def test_split_decreases(tm, book, data, nu):
    i = data.draw(st.integers(0, len(book) - 1))
    exposures = [e for e, _ in book]
    ratings = [g for _, g in book]
    split_e = exposures[:i] + [exposures[i] / 2, exposures[i] / 2] + exposures[i + 1:]
    split_r = ratings[:i] + [ratings[i], ratings[i]] + ratings[i + 1:]
    params = RiskParams(nu=nu)
    a = ga_approx(make_portfolio(exposures, ratings, nu=nu), tm, params)
    b = ga_approx(make_portfolio(split_e, split_r, nu=nu), tm, params)
    assert b.ga_full < a.ga_full
    assert b.ga_simplified < a.ga_simplified


@pytest.mark.parametrize("grade", ["BBB", "B", "Cs"])
def test_homogeneous_one_over_n(tm, grade):
    params = RiskParams(nu=0.25)
    one = ga_approx(make_portfolio([1.0], grade, nu=0.25), tm, params)
    for n in (2, 10, 250):
        rep = ga_approx(make_portfolio([1.0] * n, grade, nu=0.25), tm, params)
        assert rep.ga_full == pytest.approx(one.ga_full / n, rel=1e-12)
        assert rep.ga_simplified == pytest.approx(one.ga_simplified / n, rel=1e-12)


def test_relative_ga():
    assert relative_ga(0.0, 0.1) == 0.0
    assert relative_ga(0.1, 0.1) == 0.5
    assert 0 <= relative_ga(0.3, 0.01) < 1


def test_default_xi():
    assert XI_SP == 0.25 and RiskParams().xi == 0.25
