import math

import numpy as np
import pytest

import namerisk.mc as mc
from namerisk.fixtures import load_fixture
from namerisk.irb import asymptotic_el
from namerisk.mc import (GaSample, SimulationError, actuarial_ga_sample, ga_mc_actuarial, ga_mc_mtm, order_index,
                         paired_difference, quantile_std_error, simulate_actuarial_losses, simulate_actuarial_var)
from namerisk.mtm import build_mtm_model
from namerisk.params import RiskParams
from namerisk.portfolio import LgdSpec

from conftest import make_portfolio, one_grade_matrix
from oracles import asymptotic_el_oracle, var_oracle


def test_order_index_uses_decimal_q():
    assert order_index(0.999, 1000) == 999
    assert order_index(0.999, 10**6) == 999_000
    assert order_index(0.999, 10_001) == 9991
    assert order_index(0.5, 3) == 2


def test_quantile_se_uniform():
    u = np.sort(np.random.default_rng(1).random(10**6))
    se = quantile_std_error(u, 0.999)
    assert se == pytest.approx(math.sqrt(0.999 * 0.001 / 1e6), rel=0.15)
    assert se == pytest.approx(3.2e-5, rel=0.15)


def test_quantile_se_constant_and_errors():
    assert quantile_std_error(np.full(20_000, 0.3), 0.999) == 0.0
    with pytest.raises(SimulationError):
        quantile_std_error(np.zeros(9_999), 0.999)
    with pytest.raises(SimulationError, match="too extreme"):
        quantile_std_error(np.arange(10_001.0), 0.99999)


def test_mc_estimate_contract():
    est = mc.McEstimate.from_value(0.1, 0.01, 10_000)
    assert est.ci95[0] < est.value < est.ci95[1]
    s = est.shifted(-0.05, 2.0)
    assert s.value == pytest.approx(0.1) and s.std_error == pytest.approx(0.02)


@pytest.mark.parametrize("n", [10_000, 100_000, 1_000_000])
def test_single_loan_var_is_elgd(n):
    tm = one_grade_matrix(0.02)
    est = simulate_actuarial_var(make_portfolio([135.0], "G"), tm, RiskParams(n_scenarios=n))
    assert est.value == 0.45
    assert est.std_error == 0.0


def test_floored_pds_give_zero_var():
    tm = one_grade_matrix(0.0)
    p = make_portfolio([1.0] * 5, "G")
    assert simulate_actuarial_var(p, tm, RiskParams(n_scenarios=100_000)).value == 0.0


def test_two_name_quadrature_oracle():
    tm = one_grade_matrix(0.3)
    p = make_portfolio([1.0, 1.0], "G")
    params = RiskParams(n_scenarios=200_000, rho_mode="fixed", rho_fixed=0.2)
    var, *_ = var_oracle([0.5, 0.5], [0.3, 0.3], [0.2, 0.2], 0.45, 0.999)
    est = simulate_actuarial_var(p, tm, params)
    assert est.ci95[0] - 1e-12 <= var <= est.ci95[1] + 1e-12
    ga = ga_mc_actuarial(p, tm, params)
    ga_oracle = var - asymptotic_el_oracle([0.5, 0.5], [0.3, 0.3], [0.2, 0.2], 0.45, 0.999)
    assert ga.ci95[0] - 1e-12 <= ga_oracle <= ga.ci95[1] + 1e-12


def test_interior_var_oracle(tm):
    # VaR sits strictly inside the loss support
    p = make_portfolio([0.5, 0.3, 0.2], ["B", "B-", "BB-"])
    pds = [float(tm.p[tm.scale.index(g), 0]) for g in ("B", "B-", "BB-")]
    params = RiskParams(n_scenarios=1_000_000)
    rhos = params.correlations(np.array(pds))
    var, levels, _ = var_oracle([0.5, 0.3, 0.2], pds, rhos, 0.45, 0.999)
    assert levels[0] < var < levels[-1]
    est = simulate_actuarial_var(p, tm, params)
    assert est.ci95[0] - 1e-12 <= var <= est.ci95[1] + 1e-12


def test_ga_is_var_minus_asymptotic_el(tm):
    p = load_fixture("DEMO10")
    params = RiskParams(n_scenarios=50_000)
    var = simulate_actuarial_var(p, tm, params)
    ga = ga_mc_actuarial(p, tm, params)
    assert ga.value == pytest.approx(var.value - asymptotic_el(p, tm, params), abs=1e-15)
    assert ga.std_error == var.std_error


@pytest.mark.parametrize("nu", [0.0, 0.25])
def test_deterministic_across_threads(tm, nu):
    p = load_fixture("DEMO10", tm, LgdSpec(0.45, nu))
    base = RiskParams(n_scenarios=300_000, nu=nu, seed=99)
    ref = simulate_actuarial_losses(p, tm, base)
    for jobs in (4, 16):
        other = simulate_actuarial_losses(p, tm, base.replace(n_jobs=jobs))
        assert np.array_equal(ref, other)
    assert ga_mc_actuarial(p, tm, base) == ga_mc_actuarial(p, tm, base.replace(n_jobs=4))


def test_mtm_deterministic_across_threads(tm, curve):
    p = load_fixture("DEMO10", tm, LgdSpec(0.45, 0.25))
    params = RiskParams(n_scenarios=200_000, nu=0.25)
    model = build_mtm_model(p.with_maturity(3.0), tm, curve, params, "ratings")
    assert ga_mc_mtm(model, params) == ga_mc_mtm(model, params.replace(n_jobs=16))


def test_chunking_does_not_change_draws(tm, monkeypatch):
    p = load_fixture("DEMO10")
    params = RiskParams(n_scenarios=70_000)
    ref = simulate_actuarial_losses(p, tm, params)
    monkeypatch.setattr(mc, "CHUNK_ELEMENTS", 3_000)
    assert np.array_equal(simulate_actuarial_losses(p, tm, params), ref)


def test_seed_changes_result(tm):
    p = load_fixture("DEMO10")
    a = simulate_actuarial_losses(p, tm, RiskParams(n_scenarios=20_000, seed=1))
    b = simulate_actuarial_losses(p, tm, RiskParams(n_scenarios=20_000, seed=2))
    assert not np.array_equal(a, b)


@pytest.mark.slow
def test_ci_shrinks_like_root_n(tm):
    # averaged over seeds; beta LGDs keep the loss distribution free of atoms
    p = load_fixture("DEMO10", tm, LgdSpec(0.45, 0.25))
    widths = np.zeros(3)
    for seed in range(4):
        for i, n in enumerate((100_000, 400_000, 1_600_000)):
            est = ga_mc_actuarial(p, tm, RiskParams(n_scenarios=n, seed=seed, nu=0.25))
            widths[i] += est.ci95[1] - est.ci95[0]
    for wide, narrow in zip(widths, widths[1:]):
        assert 1.7 <= wide / narrow <= 2.3


def test_nu_one_rejected(tm):
    p = load_fixture("DEMO10", tm, LgdSpec(0.45, 1.0))
    with pytest.raises(SimulationError, match="nu = 1"):
        ga_mc_actuarial(p, tm, RiskParams(n_scenarios=10_000, nu=1.0))


def test_beta_lgd_moments():
    rng = np.random.default_rng(0)
    elgd = np.array([0.45, 0.10, 0.3])
    nu = np.array([0.25, 0.25, 0.0])
    stochastic, a, b = mc._beta_shapes(elgd, nu)
    lgd = mc._draw_lgd(rng, 400_000, elgd, stochastic, a, b)
    np.testing.assert_allclose(lgd.mean(axis=0), elgd, atol=2e-3)
    np.testing.assert_allclose(lgd.std(axis=0), np.sqrt(nu * elgd * (1 - elgd)), atol=2e-3)
    assert np.all(lgd[:, 2] == 0.3)


def test_antithetic_option(tm):
    p = load_fixture("DEMO10")
    plain = ga_mc_actuarial(p, tm, RiskParams(n_scenarios=200_000))
    anti = ga_mc_actuarial(p, tm, RiskParams(n_scenarios=200_000, antithetic=True))
    assert anti.value != plain.value
    assert abs(anti.value - plain.value) < 3 * math.hypot(anti.std_error, plain.std_error) + 1e-9


def test_default_mode_mtm_matches_actuarial(tm, curve):
    p = load_fixture("DEMO10").with_maturity(1.0)
    params = RiskParams(n_scenarios=1_000_000)
    act = ga_mc_actuarial(p, tm, params)
    mtm = ga_mc_mtm(build_mtm_model(p, tm, curve, params, "default"), params)
    half = lambda e: e.ci95[1] - e.value
    assert abs(mtm.value - act.value) <= 1.5 * math.hypot(half(act), half(mtm))


def test_paired_difference(tm):
    p = load_fixture("DEMO10")
    params = RiskParams(n_scenarios=400_000)
    a = actuarial_ga_sample(p, tm, params)
    same = paired_difference(a, a)
    assert same.value == 0.0 and same.std_error == 0.0
    b = actuarial_ga_sample(p, tm, params.replace(rho_mode="fixed", rho_fixed=0.35))
    d = paired_difference(a, b)
    assert d.value == pytest.approx(a.estimate().value - b.estimate().value, abs=1e-15)
    assert d.std_error > 0
    with pytest.raises(SimulationError):
        paired_difference(a, GaSample(a.samples[:200_000], a.offset, a.scale, a.q))
    small = actuarial_ga_sample(p, tm, params.replace(n_scenarios=100_000))
    with pytest.raises(SimulationError, match="too few"):
        paired_difference(small, small)
