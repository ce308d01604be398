"""Closed-form granularity adjustment in the one-factor CreditRisk+ setting."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammainc

from .irb import IrbOutputs, portfolio_irb
from .params import RiskParams
from .portfolio import Portfolio, exposure_shares
from .ratings import TransitionMatrix

XI_SP = 0.25
XI_CALIBRATED = 0.063


class GammaQuantileError(RuntimeError):
    pass


@dataclass(frozen=True)
class GaAnalyticReport:
    ga_full: float
    ga_simplified: float
    k_star: float
    contributions_full: np.ndarray
    contributions_simplified: np.ndarray
    delta: float


def gamma_quantile(xi: float, q: float) -> float:
    """``q``-quantile of a Gamma factor with mean 1 and variance ``1/xi``.

    Solves ``P(xi, xi * x) = q`` for ``x`` with Brent's method on a bracket that
    is doubled until it contains the root.
    """
    if not xi > 0.0:
        raise ValueError("xi must be positive")
    if not 0.0 < q < 1.0:
        raise ValueError("q must lie in (0, 1)")

    def f(x):
        return gammainc(xi, xi * x) - q

    lo, hi = 0.0, 1.0
    for _ in range(2000):
        if f(hi) >= 0.0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise GammaQuantileError(f"no bracket found for xi={xi}, q={q}: last [{lo}, {hi}]")
    try:
        return brentq(f, lo, hi, xtol=1e-300, rtol=1e-13, maxiter=500)
    except (RuntimeError, ValueError) as exc:
        raise GammaQuantileError(f"root search failed on [{lo}, {hi}]: {exc}") from exc


def delta_factor(xi: float, q: float, alpha: float | None = None) -> float:
    """``(alpha - 1) * (xi + (1 - xi) / alpha)`` with ``alpha`` the Gamma quantile."""
    if alpha is None:
        alpha = gamma_quantile(xi, q)
    return (alpha - 1.0) * (xi + (1.0 - xi) / alpha)


def _ga_terms(a, elgd, nu, K, R):
    a2 = a * a
    C = elgd + nu * (1.0 - elgd)  # (VLGD^2 + ELGD^2) / ELGD
    KR = K + R
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ratio = np.where(elgd > 0.0, nu * (1.0 - elgd) / elgd, 0.0)  # VLGD^2 / ELGD^2
    return a2, C, KR, v_ratio


def ga_from_irb(a, elgd, nu, irb: IrbOutputs, delta: float) -> GaAnalyticReport:
    """Full and simplified GA from shares, LGD moments and IRB outputs."""
    a = np.asarray(a, dtype=float)
    K, R = np.asarray(irb.K, dtype=float), np.asarray(irb.R, dtype=float)
    k_star = math.fsum(a * K)
    if not k_star > 0.0:
        raise ValueError("K* is zero: every borrower has zero unexpected-loss capital")
    a2, C, KR, v_ratio = _ga_terms(a, np.asarray(elgd, float), np.asarray(nu, float), K, R)
    simple = a2 * C * (delta * KR - K)
    # written so that the extra term vanishes identically when nu == 0
    extra = a2 * np.where(v_ratio > 0.0, KR * v_ratio * (delta * KR - 2.0 * K), 0.0)
    full = simple + extra
    scale = 1.0 / (2.0 * k_star)
    return GaAnalyticReport(
        ga_full=math.fsum(full) * scale,
        ga_simplified=math.fsum(simple) * scale,
        k_star=k_star,
        contributions_full=full * scale,
        contributions_simplified=simple * scale,
        delta=delta,
    )


def ga_approx(p: Portfolio, tm: TransitionMatrix, params: RiskParams, maturity=None,
              irb: IrbOutputs | None = None) -> GaAnalyticReport:
    """Analytic GA for a portfolio, ``xi`` and ``q`` taken from ``params``.

    ``maturity`` overrides position maturities in the maturity adjustment
    (e.g. ``1.0`` for the one-year setting).
    """
    if irb is None:
        irb = portfolio_irb(p, tm, params, maturity)
    delta = delta_factor(params.xi, params.q)
    return ga_from_irb(exposure_shares(p), p.elgd, p.nu, irb, delta)


def relative_ga(ga: float, k_star: float) -> float:
    """Share of total unexpected loss due to name concentration, ``GA / (K* + GA)``."""
    return ga / (k_star + ga)
