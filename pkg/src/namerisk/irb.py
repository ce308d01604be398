"""Single-factor (Vasicek / Basel IRB) building blocks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

from .params import RiskParams
from .portfolio import Portfolio, exposure_shares
from .ratings import TransitionMatrix, floor_pd

MA_MIN_MATURITY = 1.0
MA_MAX_MATURITY = 5.0


@dataclass(frozen=True)
class IrbInputs:
    pd: float
    elgd: float
    maturity: float = 1.0
    rho: float | None = None  # None selects the IRB correlation formula

    def __post_init__(self):
        if self.rho is not None and not 0.0 < self.rho < 1.0:
            raise ValueError(f"fixed rho must lie in (0, 1), got {self.rho}")


@dataclass(frozen=True)
class IrbOutputs:
    """Per-borrower arrays (or scalars) of IRB quantities."""

    rho: np.ndarray
    cond_pd: np.ndarray
    K: np.ndarray
    R: np.ndarray
    MA: np.ndarray


def asset_correlation_irb(pd):
    """Basel corporate/sovereign correlation, between 0.12 (pd=1) and 0.24 (pd->0)."""
    pd = np.asarray(pd, dtype=float)
    w = -np.expm1(-50.0 * pd) / -np.expm1(-50.0)
    out = 0.12 * w + 0.24 * (1.0 - w)
    return out if out.ndim else float(out)


def conditional_pd(pd, rho, q):
    """Default probability given the systematic factor at its adverse ``q``-quantile."""
    pd = np.asarray(pd, dtype=float)
    rho = np.asarray(rho, dtype=float)
    out = ndtr((ndtri(pd) + np.sqrt(rho) * ndtri(q)) / np.sqrt(1.0 - rho))
    return out if out.ndim else float(out)


def maturity_adjustment(pd, m, clamp: bool = True):
    """Basel maturity adjustment; ``m`` is clamped to ``[1, 5]`` unless ``clamp=False``."""
    pd = np.asarray(pd, dtype=float)
    m = np.asarray(m, dtype=float)
    if clamp:
        m = np.clip(m, MA_MIN_MATURITY, MA_MAX_MATURITY)
    b = (0.11852 - 0.05478 * np.log(pd)) ** 2
    out = (1.0 + (m - 2.5) * b) / (1.0 - 1.5 * b)
    return out if out.ndim else float(out)


def irb_outputs(pd, elgd, maturity, q: float, rho=None, ma_clamp: bool = True) -> IrbOutputs:
    """Vectorized IRB quantities. ``rho=None`` uses :func:`asset_correlation_irb`."""
    pd = floor_pd(np.asarray(pd, dtype=float))
    elgd = np.asarray(elgd, dtype=float)
    rho = asset_correlation_irb(pd) if rho is None else np.broadcast_to(np.asarray(rho, dtype=float), pd.shape)
    cpd = conditional_pd(pd, rho, q)
    ma = maturity_adjustment(pd, maturity, clamp=ma_clamp)
    K = (elgd * cpd - pd * elgd) * ma
    R = elgd * pd
    return IrbOutputs(np.asarray(rho), np.asarray(cpd), np.asarray(K), np.asarray(R), np.asarray(ma))


def capital_and_reserve(inputs: IrbInputs, q: float, ma_clamp: bool = True) -> tuple[float, float]:
    """UL capital ``K`` and EL reserve ``R`` for one borrower."""
    out = irb_outputs(inputs.pd, inputs.elgd, inputs.maturity, q, inputs.rho, ma_clamp)
    return float(out.K), float(out.R)


def borrower_pds(p: Portfolio, tm: TransitionMatrix) -> np.ndarray:
    """One-year PDs read off the default column, floored."""
    return floor_pd(tm.p[p.grade_indices(tm.scale), 0])


def portfolio_irb(p: Portfolio, tm: TransitionMatrix, params: RiskParams, maturity=None) -> IrbOutputs:
    """IRB outputs per position; ``maturity`` overrides the positions' maturities."""
    pd = borrower_pds(p, tm)
    m = p.maturities if maturity is None else maturity
    return irb_outputs(pd, p.elgd, m, params.q, params.correlations(pd), params.ma_clamp)


def asymptotic_el(p: Portfolio, tm: TransitionMatrix, params: RiskParams) -> float:
    """Exposure-weighted conditional expected loss at the ``q``-quantile of the factor."""
    pd = borrower_pds(p, tm)
    cpd = conditional_pd(pd, params.correlations(pd), params.q)
    return math.fsum(exposure_shares(p) * p.elgd * cpd)
