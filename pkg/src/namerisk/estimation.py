"""Asset-correlation estimators for default-rate series and calibration of ``xi``."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import integrate, optimize, stats
from scipy.special import expit, gammaln, log_ndtr, logit, logsumexp, ndtr, ndtri

from .ga_analytic import delta_factor, ga_from_irb
from .irb import conditional_pd, portfolio_irb
from .params import RiskParams
from .portfolio import Portfolio, exposure_shares
from .ratings import TransitionMatrix

MIN_YEARS = 10
RHO_BRACKET = (1e-4, 0.99)
XI_BOUNDS = (0.005, 2.0)
XI_GRID = 241
_COARSE_GRID = np.linspace(0.0, 1.0, 401)
_LOCAL_GRID = np.linspace(-8.0, 8.0, 161)
_FINAL_GRID = np.linspace(-12.0, 12.0, 321)  # trapezoid nodes, in posterior sd units
LOCAL_PASSES = 5


class EstimationError(ValueError):
    pass


@dataclass(frozen=True)
class DefaultRateSeries:
    """Yearly cohort sizes ``n_t`` and default counts ``k_t``."""

    years: np.ndarray
    cohort_size: np.ndarray
    defaults: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.cohort_size, dtype=np.int64)
        k = np.asarray(self.defaults, dtype=np.int64)
        years = np.asarray(self.years)
        object.__setattr__(self, "cohort_size", n)
        object.__setattr__(self, "defaults", k)
        object.__setattr__(self, "years", years)
        if not (n.shape == k.shape == years.shape) or n.ndim != 1:
            raise EstimationError("years, cohort_size and defaults must be 1-D arrays of equal length")
        if np.any(n <= 0):
            raise EstimationError("cohort sizes must be positive")
        if np.any(k < 0) or np.any(k > n):
            bad = int(np.flatnonzero((k < 0) | (k > n))[0])
            raise EstimationError(f"year {years[bad]}: defaults {k[bad]} outside [0, {n[bad]}]")

    @classmethod
    def from_counts(cls, cohort_size, defaults, first_year: int = 1) -> "DefaultRateSeries":
        n = np.asarray(cohort_size)
        return cls(np.arange(first_year, first_year + n.size), n, np.asarray(defaults))

    def __len__(self) -> int:
        return int(self.years.size)

    @property
    def rates(self) -> np.ndarray:
        return self.defaults / self.cohort_size

    def scaled(self, factor: int) -> "DefaultRateSeries":
        """Same default rates with cohorts ``factor`` times larger."""
        return DefaultRateSeries(self.years, self.cohort_size * factor, self.defaults * factor)

    def require_length(self, minimum: int = MIN_YEARS) -> None:
        if len(self) < minimum:
            raise EstimationError(f"need at least {minimum} years of data, got {len(self)}")


def load_default_series(path: str | Path) -> DefaultRateSeries:
    """Read a ``year,cohort_size,defaults`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise EstimationError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != ["year", "cohort_size", "defaults"]:
        raise EstimationError(f"{path}: expected header 'year,cohort_size,defaults', got {header}")
    try:
        data = np.array([[int(c) for c in r] for r in rows[1:]], dtype=np.int64)
    except ValueError as exc:
        raise EstimationError(f"{path}: non-integer entry ({exc})") from None
    if data.size == 0:
        raise EstimationError(f"{path}: no data rows")
    return DefaultRateSeries(data[:, 0], data[:, 1], data[:, 2])


def save_default_series(series: DefaultRateSeries, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "cohort_size", "defaults"])
        w.writerows(zip(series.years.tolist(), series.cohort_size.tolist(), series.defaults.tolist()))


def simulate_default_series(pd: float, rho: float, n_years: int, cohort_size: int, seed: int) -> DefaultRateSeries:
    """Yearly default counts from the one-factor model with a fresh factor draw per year."""
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n_years)
    p = ndtr((ndtri(pd) - math.sqrt(rho) * x) / math.sqrt(1.0 - rho))
    k = rng.binomial(cohort_size, p)
    return DefaultRateSeries.from_counts(np.full(n_years, cohort_size), k)


@dataclass(frozen=True)
class CorrelationEstimate:
    rho_hat: float
    method: str
    pd_hat: float
    diagnostics: dict = field(default_factory=dict)


def _conditional_pd_given_x(pd, rho, x):
    # default when sqrt(rho) X + sqrt(1-rho) eps <= Phi^-1(pd); low x is the adverse state
    return ndtr((ndtri(pd) - math.sqrt(rho) * x) / math.sqrt(1.0 - rho))


def _moments(x: np.ndarray, logf: np.ndarray, spacing) -> tuple[np.ndarray, np.ndarray]:
    # a spike narrower than the grid shows up as sd ~ 0; keep the grid spacing as a floor
    p = np.exp(logf - logf.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    mu = np.sum(p * x, axis=1, keepdims=True)
    sd = np.sqrt(np.sum(p * (x - mu) ** 2, axis=1, keepdims=True))
    return mu, np.maximum(sd, spacing)


def mixture_log_likelihood(series: DefaultRateSeries, pd: float, rho: float, ) -> float:
    """``sum_t ln E[Binom(k_t; n_t, pi(X))]`` by adaptive quadrature.

    For large cohorts the binomial term is a narrow spike in ``x``, so the
    nodes are centred and scaled on each year's integrand. Both factors of
    the integrand are log-concave, so its mode lies between the prior mode 0
    and the ``x`` at which ``pi(x)`` equals the observed rate; a coarse grid
    over that interval (padded) is refined by local passes. The final rule is
    a trapezoid over +/-12 posterior sd: years with no defaults have a
    one-sided edge that Gauss-Hermite nodes resolve poorly.
    """
    k = series.defaults[:, None].astype(float)
    n = series.cohort_size[:, None].astype(float)
    c, sr, sc = float(ndtri(pd)), math.sqrt(rho), math.sqrt(1.0 - rho)

    def logf(x):
        z = (c - sr * x) / sc
        return k * log_ndtr(z) + (n - k) * log_ndtr(-z) - 0.5 * x * x

    rate = np.clip(k / n, 0.5 / n, 1.0 - 0.5 / n)
    x_lik = (c - sc * ndtri(rate)) / sr
    lo, hi = np.minimum(x_lik, 0.0) - 8.0, np.maximum(x_lik, 0.0) + 8.0
    x = lo + (hi - lo) * _COARSE_GRID
    mu, sd = _moments(x, logf(x), (hi - lo) * _COARSE_GRID[1])
    for _ in range(LOCAL_PASSES):
        step = sd * (_LOCAL_GRID[1] - _LOCAL_GRID[0])
        x = mu + sd * _LOCAL_GRID
        mu, sd = _moments(x, logf(x), step)
    x = mu + sd * _FINAL_GRID
    log_int = np.log(sd[:, 0] * (_FINAL_GRID[1] - _FINAL_GRID[0])) + logsumexp(logf(x), axis=1)
    log_binom = gammaln(n[:, 0] + 1) - gammaln(k[:, 0] + 1) - gammaln(n[:, 0] - k[:, 0] + 1)
    return float(np.sum(log_int + log_binom) - 0.5 * k.shape[0] * math.log(2.0 * math.pi))


def estimate_rho_mle(series: DefaultRateSeries, starts: Sequence[float] = (0.05, 0.2, 0.4)) -> CorrelationEstimate:
    """Joint maximum-likelihood estimate of ``(PD, rho)`` for the binomial mixture.

    Nelder-Mead on ``(logit PD, logit rho)`` from several correlation starts;
    the best converged run wins.
    """
    series.require_length()
    k, n = series.defaults, series.cohort_size
    if not np.any((k > 0) & (k < n)):
        raise EstimationError("every year has zero or all defaults; the likelihood is flat in rho")
    pd0 = float(np.clip(series.rates.mean(), 1e-6, 1 - 1e-6))

    def nll(theta):
        pd, rho = expit(theta)
        if not (1e-8 < pd < 1 - 1e-8 and 1e-8 < rho < 1 - 1e-8):
            return 1e300
        return -mixture_log_likelihood(series, pd, rho)

    best = None
    for rho0 in starts:
        res = optimize.minimize(nll, x0=[logit(pd0), logit(rho0)], method="Nelder-Mead",
                                options={"xatol": 1e-8, "fatol": 1e-10, "maxiter": 4000})
        if res.success and (best is None or res.fun < best.fun):
            best = res
    if best is None:
        raise EstimationError("maximum-likelihood search did not converge from any start")
    pd, rho = map(float, expit(best.x))
    return CorrelationEstimate(rho, "mle", pd, {"log_likelihood": -float(best.fun), "converged": True,
                                                "iterations": int(best.nit)})


def bivariate_default_probability(c: float, rho: float) -> float:
    """``P(Y1 <= c, Y2 <= c)`` for unit normals with correlation ``rho``, by integrating over the factor."""
    if rho == 0.0:
        return float(ndtr(c)) ** 2
    sr, sc = math.sqrt(rho), math.sqrt(1.0 - rho)

    def f(x):
        return ndtr((c - sr * x) / sc) ** 2 * math.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)

    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-12, epsrel=1e-10, limit=200)
    return val


def estimate_rho_mom(series: DefaultRateSeries) -> CorrelationEstimate:
    """Method of moments: match the joint default probability to ``PD^2`` plus systematic rate variance.

    The raw rate variance is reduced by the binomial noise ``mean(PD (1 - PD) / n_t)``.
    """
    series.require_length()
    r = series.rates
    pd = float(r.mean())
    raw_var = float(r.var(ddof=1))
    if raw_var <= 0.0:
        raise EstimationError("default rates have zero sample variance")
    binom_var = float(np.mean(pd * (1.0 - pd) / series.cohort_size))
    sys_var = raw_var - binom_var
    if sys_var <= 0.0:
        raise EstimationError(f"rate variance {raw_var:.3g} is below the binomial floor {binom_var:.3g}; "
                              "no systematic variance to attribute")
    c = float(ndtri(pd))
    target = pd * pd + sys_var

    def gap(rho):
        return bivariate_default_probability(c, rho) - target

    lo, hi = RHO_BRACKET
    if gap(lo) > 0.0 or gap(hi) < 0.0:
        raise EstimationError(f"moment condition has no root for rho in [{lo}, {hi}]")
    rho = optimize.bisect(gap, lo, hi, xtol=1e-12, maxiter=200)
    return CorrelationEstimate(float(rho), "mom", pd, {"raw_variance": raw_var, "binomial_variance": binom_var,
                                                      "residual": float(gap(rho))})


def rho_from_unexpected_loss(pd: float, ul: float, elgd: float, q: float) -> float:
    """Correlation at which ``elgd * (conditional_pd(pd, rho, q) - pd)`` equals ``ul``."""
    if ul <= 0.0:
        raise EstimationError(f"unexpected loss must be positive, got {ul:.3g}")

    def gap(rho):
        return elgd * (conditional_pd(pd, rho, q) - pd) - ul

    lo, hi = 1e-10, 1.0 - 1e-10
    if gap(lo) > 0.0 or gap(hi) < 0.0:
        raise EstimationError(f"no correlation in (0, 1) reproduces unexpected loss {ul:.6g} at pd={pd:.6g}")
    return float(optimize.bisect(gap, lo, hi, xtol=1e-14, maxiter=300))


def estimate_rho_beta_match(series: DefaultRateSeries, elgd: float = 0.45, q: float = 0.999) -> CorrelationEstimate:
    """Match the IRB unexpected loss to that of a beta law fitted to loss-rate moments."""
    series.require_length()
    if not elgd > 0.0:
        raise EstimationError("elgd must be positive")
    loss = series.rates * elgd
    m, v = float(loss.mean()), float(loss.var(ddof=1))
    if m <= 0.0 or v <= 0.0:
        raise EstimationError("loss-rate mean and variance must be positive")
    if v >= m * (1.0 - m):
        raise EstimationError("loss-rate variance too large for a beta law")
    common = m * (1.0 - m) / v - 1.0
    a, b = m * common, (1.0 - m) * common
    ul = float(stats.beta.ppf(q, a, b)) - m
    if ul <= 0.0:
        raise EstimationError(f"empirical unexpected loss {ul:.3g} is not positive at q={q}")
    pd = m / elgd
    rho = rho_from_unexpected_loss(pd, ul, elgd, q)
    return CorrelationEstimate(rho, "beta-match", pd, {"beta_a": a, "beta_b": b, "ul_empirical": ul})


ESTIMATORS = {"mle": estimate_rho_mle, "mom": estimate_rho_mom, "beta-match": estimate_rho_beta_match}


@dataclass(frozen=True)
class XiCalibration:
    xi: float
    mse: float
    residuals: np.ndarray
    ga_approx: np.ndarray
    targets: np.ndarray
    at_bound: bool


class _LinearGa:
    """Analytic GA per portfolio as ``g0 + delta * g1``; only ``delta`` depends on ``xi``."""

    def __init__(self, portfolios, tm, params, maturity):
        g0, g1 = [], []
        for p in portfolios:
            irb = portfolio_irb(p, tm, params, maturity)
            a = exposure_shares(p)
            base = ga_from_irb(a, p.elgd, p.nu, irb, 0.0).ga_full
            g0.append(base)
            g1.append(ga_from_irb(a, p.elgd, p.nu, irb, 1.0).ga_full - base)
        self.g0, self.g1 = np.array(g0), np.array(g1)
        self.q = params.q

    def __call__(self, xi: float) -> np.ndarray:
        return self.g0 + delta_factor(xi, self.q) * self.g1


def calibrate_xi(portfolios: Sequence[Portfolio], targets, tm: TransitionMatrix, params: RiskParams,
                 maturity=None, bounds: tuple[float, float] = XI_BOUNDS, grid: int = XI_GRID) -> XiCalibration:
    """``xi`` minimizing the mean squared gap between analytic GAs and fixed targets.

    ``targets`` are exact (simulated) GAs computed once. A log-spaced grid
    locates the best cell, then golden-section search refines it in log ``xi``.
    ``maturity`` is forwarded to the maturity adjustment.
    """
    targets = np.asarray(targets, dtype=float)
    if len(portfolios) == 0:
        raise EstimationError("need at least one portfolio")
    if targets.shape != (len(portfolios),):
        raise EstimationError(f"expected {len(portfolios)} targets, got shape {targets.shape}")
    if not np.all(np.isfinite(targets)):
        bad = int(np.flatnonzero(~np.isfinite(targets))[0])
        raise EstimationError(f"non-finite target GA for portfolio {bad}")
    ga = _LinearGa(portfolios, tm, params, maturity)

    def mse(log_xi):
        return float(np.mean((ga(math.exp(log_xi)) - targets) ** 2))

    lx = np.linspace(math.log(bounds[0]), math.log(bounds[1]), grid)
    vals = np.array([mse(v) for v in lx])
    if not np.all(np.isfinite(vals)):
        raise EstimationError("non-finite analytic GA on the xi grid")
    i = int(np.argmin(vals))
    at_bound = i in (0, grid - 1)
    if at_bound:
        best = lx[i]
    else:
        res = optimize.minimize_scalar(mse, bracket=(lx[i - 1], lx[i], lx[i + 1]), method="golden",
                                       tol=1e-12)
        best = res.x if res.fun <= vals[i] else lx[i]
    xi = math.exp(best)
    fitted = ga(xi)
    return XiCalibration(xi, mse(best), fitted - targets, fitted, targets, at_bound)


def xi_mse(portfolios: Sequence[Portfolio], targets, tm: TransitionMatrix, params: RiskParams, xi: float,
           maturity=None) -> float:
    """Mean squared gap at a given ``xi``."""
    ga = _LinearGa(portfolios, tm, params, maturity)
    return float(np.mean((ga(xi) - np.asarray(targets, dtype=float)) ** 2))
