"""Monte Carlo VaR and exact granularity adjustments.

Scenarios are generated in fixed-size blocks. Block ``b`` draws from its own
Philox stream keyed by ``(seed, b)``, so results do not depend on how blocks
are scheduled over worker threads. Inside a block the factor draws come
first, then idiosyncratic draws (and LGD gammas) in row chunks whose size
depends only on the number of borrowers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.special import ndtri

from .irb import asymptotic_el, borrower_pds
from .mtm import MtmModel, conditional_moments
from .params import RiskParams
from .portfolio import Portfolio, exposure_shares
from .ratings import TransitionMatrix

BLOCK_SIZE = 1 << 16
CHUNK_ELEMENTS = 1 << 22  # normals drawn per chunk inside a block
PAIRED_BATCHES = 20
Z_975 = 1.959963984540054


class SimulationError(ValueError):
    pass


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    ci95: tuple[float, float]
    scenarios_used: int

    @classmethod
    def from_value(cls, value: float, std_error: float, n: int) -> "McEstimate":
        half = Z_975 * std_error
        return cls(float(value), float(std_error), (float(value - half), float(value + half)), int(n))

    def shifted(self, offset: float, scale: float = 1.0) -> "McEstimate":
        """Estimate of ``scale * (value + offset)``; the offset is deterministic."""
        return McEstimate.from_value(scale * (self.value + offset), abs(scale) * self.std_error, self.scenarios_used)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Counter-based generator for one scenario block."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def order_index(q: float, n: int) -> int:
    """1-based index ``ceil(q * n)`` with ``q`` read as the decimal it prints as."""
    return max(1, math.ceil(Fraction(repr(float(q))) * n))


def quantile_std_error(sorted_losses: np.ndarray, q: float) -> float:
    """Standard error of the ``ceil(q n)`` order statistic.

    Uses the half-width of the binomial bracket ``k +/- z sqrt(n q (1-q))``
    read off the sorted sample, divided by ``2 z``.
    """
    x = np.asarray(sorted_losses)
    n = x.size
    if n < 10_000:
        raise SimulationError(f"need at least 10000 samples for a quantile error, got {n}")
    k = order_index(q, n)
    half = Z_975 * math.sqrt(n * q * (1.0 - q))
    k_lo, k_hi = math.floor(k - half), math.ceil(k + half)
    if k_lo < 1 or k_hi > n:
        raise SimulationError(f"order-statistic bracket [{k_lo}, {k_hi}] leaves the sample 1..{n}; "
                              f"q={q} is too extreme for {n} scenarios")
    return float(x[k_hi - 1] - x[k_lo - 1]) / (2.0 * Z_975)


def _blocks(n: int):
    return [(b, min(BLOCK_SIZE, n - b * BLOCK_SIZE)) for b in range(math.ceil(n / BLOCK_SIZE))]


def _run_blocks(fn, params: RiskParams) -> np.ndarray:
    blocks = _blocks(params.n_scenarios)
    if params.n_jobs == 1:
        parts = [fn(b, n) for b, n in blocks]
    else:
        with ThreadPoolExecutor(max_workers=params.n_jobs) as pool:
            parts = list(pool.map(lambda bn: fn(*bn), blocks))
    return np.concatenate(parts)


def _beta_shapes(elgd: np.ndarray, nu: np.ndarray):
    if np.any(nu >= 1.0):
        raise SimulationError("nu = 1 gives degenerate beta LGD parameters (a = b = 0)")
    stochastic = nu > 0.0
    k = np.where(stochastic, 1.0 / np.where(stochastic, nu, 1.0) - 1.0, 1.0)
    return stochastic, elgd * k, (1.0 - elgd) * k


def _draw_lgd(rng, n: int, elgd, stochastic, a, b) -> np.ndarray:
    g1 = rng.standard_gamma(a, size=(n, len(elgd)))
    g2 = rng.standard_gamma(b, size=(n, len(elgd)))
    tot = g1 + g2
    with np.errstate(invalid="ignore", divide="ignore"):
        lgd = np.where(tot > 0.0, g1 / tot, elgd)
    return np.where(stochastic, lgd, elgd)


def _chunks(n: int, n_borrowers: int):
    rows = max(256, CHUNK_ELEMENTS // max(1, n_borrowers))
    return [(lo, min(n, lo + rows)) for lo in range(0, n, rows)]


def _draw_eps(rng, n: int, n_borrowers: int, antithetic: bool) -> np.ndarray:
    if antithetic:
        half = (n + 1) // 2
        eps = rng.standard_normal((half, n_borrowers))
        return np.concatenate([eps, -eps])[:n]
    return rng.standard_normal((n, n_borrowers))


def _draw_x(rng, n: int, antithetic: bool) -> np.ndarray:
    if antithetic:
        x = rng.standard_normal((n + 1) // 2)
        return np.concatenate([x, -x])[:n]
    return rng.standard_normal(n)


def simulate_actuarial_losses(p: Portfolio, tm: TransitionMatrix, params: RiskParams) -> np.ndarray:
    """Unsorted portfolio loss rates ``sum_n a_n LGD_n D_n`` per scenario, in scenario order."""
    a = exposure_shares(p)
    pd = borrower_pds(p, tm)
    rho = params.correlations(pd)
    cut = ndtri(pd)
    sr, sc = np.sqrt(rho), np.sqrt(1.0 - rho)
    elgd = p.elgd
    stochastic, ba, bb = _beta_shapes(elgd, p.nu)
    any_stochastic = bool(np.any(stochastic))
    w = a * elgd
    N = len(a)

    def block(b, n):
        rng = block_rng(params.seed, b)
        x = _draw_x(rng, n, params.antithetic)
        out = np.empty(n)
        for lo, hi in _chunks(n, N):
            eps = _draw_eps(rng, hi - lo, N, params.antithetic)
            d = (sr * x[lo:hi, None] + sc * eps) <= cut
            if any_stochastic:
                out[lo:hi] = np.sum(d * (a * _draw_lgd(rng, hi - lo, elgd, stochastic, ba, bb)), axis=1)
            else:
                out[lo:hi] = np.sum(d * w, axis=1)
        return out

    return _run_blocks(block, params)


def simulate_mtm_returns(model: MtmModel, params: RiskParams) -> np.ndarray:
    """Unsorted portfolio returns ``R = sum_n a_n P_nT(S_n) / P_n0`` per scenario, in scenario order."""
    a = model.shares
    N = model.n_borrowers
    sr, sc = np.sqrt(model.rho), np.sqrt(1.0 - model.rho)
    stochastic, ba, bb = _beta_shapes(model.elgd, model.nu)
    any_stochastic = bool(np.any(stochastic))
    rows = np.arange(N)

    def block(b, n):
        rng = block_rng(params.seed, b)
        x = _draw_x(rng, n, params.antithetic)
        out = np.empty(n)
        for lo, hi in _chunks(n, N):
            m = hi - lo
            y = sr * x[lo:hi, None] + sc * _draw_eps(rng, m, N, params.antithetic)
            states = np.empty((m, N), dtype=np.intp)
            for i in range(N):
                states[:, i] = np.searchsorted(model.cutoffs[i], y[:, i], side="left")
            ratio = model.ratios[rows, states]
            if any_stochastic:
                lgd = _draw_lgd(rng, m, model.elgd, stochastic, ba, bb)
                ratio = np.where(states == 0, (1.0 - lgd) / model.p0, ratio)
            out[lo:hi] = np.sum(ratio * a, axis=1)
        return out

    return _run_blocks(block, params)


def _quantile_estimate(samples: np.ndarray, q: float) -> McEstimate:
    s = np.sort(samples)
    k = order_index(q, s.size)
    return McEstimate.from_value(s[k - 1], quantile_std_error(s, q), s.size)


def _order_statistic(samples: np.ndarray, q: float) -> float:
    k = order_index(q, samples.size)
    return float(np.partition(samples, k - 1)[k - 1])


@dataclass(frozen=True)
class GaSample:
    """Simulated draws behind an exact GA: ``GA = scale * (quantile_q(samples) + offset)``."""

    samples: np.ndarray
    offset: float
    scale: float
    q: float

    def estimate(self) -> McEstimate:
        return _quantile_estimate(self.samples, self.q).shifted(self.offset, self.scale)


def actuarial_ga_sample(p: Portfolio, tm: TransitionMatrix, params: RiskParams) -> GaSample:
    return GaSample(simulate_actuarial_losses(p, tm, params), -asymptotic_el(p, tm, params), 1.0, params.q)


def mtm_ga_sample(model: MtmModel, params: RiskParams) -> GaSample:
    mu_star = conditional_moments(model, float(ndtri(1.0 - params.q))).mu
    return GaSample(-simulate_mtm_returns(model, params), mu_star, model.discount, params.q)


def paired_difference(a: GaSample, b: GaSample, n_batches: int = PAIRED_BATCHES) -> McEstimate:
    """``GA_a - GA_b`` for two runs sharing a seed, with a batch-means standard error.

    Both sample vectors are split into the same ``n_batches`` contiguous
    scenario ranges; the spread of the per-batch differences measures the
    noise left after the common random numbers cancel.
    """
    if a.samples.size != b.samples.size:
        raise SimulationError("paired comparison needs equal scenario counts")
    if a.q != b.q:
        raise SimulationError("paired comparison needs equal quantile levels")
    n = a.samples.size
    if n // n_batches < 10_000:
        raise SimulationError(f"{n} scenarios are too few for {n_batches} batches of at least 10000")

    def ga(s: GaSample, x: np.ndarray) -> float:
        return s.scale * (_order_statistic(x, s.q) + s.offset)

    edges = np.linspace(0, n, n_batches + 1).astype(int)
    diffs = np.array([ga(a, a.samples[lo:hi]) - ga(b, b.samples[lo:hi]) for lo, hi in zip(edges[:-1], edges[1:])])
    se = float(diffs.std(ddof=1) / math.sqrt(n_batches))
    return McEstimate.from_value(ga(a, a.samples) - ga(b, b.samples), se, n)


def simulate_actuarial_var(p: Portfolio, tm: TransitionMatrix, params: RiskParams) -> McEstimate:
    """Simulated ``q``-VaR of the default-mode loss rate."""
    return _quantile_estimate(simulate_actuarial_losses(p, tm, params), params.q)


def ga_mc_actuarial(p: Portfolio, tm: TransitionMatrix, params: RiskParams) -> McEstimate:
    """Exact GA: simulated VaR minus the asymptotic conditional expected loss."""
    return actuarial_ga_sample(p, tm, params).estimate()


def simulate_mtm_var(model: MtmModel, params: RiskParams) -> McEstimate:
    """Simulated ``q``-quantile of the negative portfolio return."""
    return _quantile_estimate(-simulate_mtm_returns(model, params), params.q)


def ga_mc_mtm(model: MtmModel, params: RiskParams) -> McEstimate:
    """Exact MtM GA, ``exp(-rT) [mu(Phi^-1(1-q)) + VaR_q(-R)]``."""
    return mtm_ga_sample(model, params).estimate()
