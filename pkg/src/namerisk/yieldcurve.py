"""Nelson-Siegel-Svensson zero curve: evaluation, discounting and fitting."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

TAU_GRID = np.arange(0.5, 10.0 + 1e-9, 0.5)


@dataclass(frozen=True)
class NssParams:
    """Continuously compounded NSS loadings with decay scales in years."""

    beta0: float
    beta1: float = 0.0
    beta2: float = 0.0
    beta3: float = 0.0
    tau1: float = 1.0
    tau2: float = 10.0

    def __post_init__(self):
        if not (self.tau1 > 0.0 and self.tau2 > 0.0):
            raise ValueError("NSS decay scales tau1, tau2 must be positive")
        if not np.isfinite(self.beta0):
            raise ValueError("beta0 must be finite")

    @classmethod
    def flat(cls, rate: float) -> "NssParams":
        return cls(rate)

    @property
    def betas(self) -> np.ndarray:
        return np.array([self.beta0, self.beta1, self.beta2, self.beta3])


@dataclass(frozen=True)
class NssFit:
    params: NssParams
    rmse: float


def _f1(x):
    # (1 - e^-x) / x, with the removable singularity at 0
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-8
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x / 2.0, -np.expm1(-safe) / safe)


def _f2(x):
    return _f1(x) - np.exp(-np.asarray(x, dtype=float))


def _design(t, tau1, tau2):
    t = np.asarray(t, dtype=float)
    return np.stack([np.ones_like(t), _f1(t / tau1), _f2(t / tau1), _f2(t / tau2)], axis=-1)


def zero_rate(p: NssParams, t):
    """Zero rate ``r(t)``; accepts scalars or arrays of positive maturities."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0.0):
        raise ValueError("zero_rate needs t > 0")
    out = _design(t_arr, p.tau1, p.tau2) @ p.betas
    return out if out.ndim else float(out)


def discount_factor(p: NssParams, t):
    """``exp(-r(t) t)``, equal to 1 at ``t = 0``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("discount_factor needs t >= 0")
    # r(0+) = beta0 + beta1, and the rate is multiplied by t anyway
    rates = _design(np.where(t_arr > 0.0, t_arr, 1.0), p.tau1, p.tau2) @ p.betas
    out = np.exp(-np.where(t_arr > 0.0, rates, 0.0) * t_arr)
    return out if out.ndim else float(out)


def _lstsq_betas(t, y, tau1, tau2):
    X = _design(t, tau1, tau2)
    betas, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = X @ betas - y
    return betas, float(np.sqrt(np.mean(resid**2)))


def fit_nss(maturities, rates) -> NssFit:
    """Least-squares NSS fit.

    Loadings are solved linearly for each ``(tau1, tau2)``; the decay scales
    come from a half-year grid on ``[0.5, 10]`` followed by a Nelder-Mead
    polish in log space.
    """
    t = np.asarray(maturities, dtype=float).ravel()
    y = np.asarray(rates, dtype=float).ravel()
    if t.shape != y.shape:
        raise ValueError("maturities and rates must have the same length")
    if t.size < 6:
        raise ValueError(f"need at least 6 observations to fit NSS, got {t.size}")
    if np.any(t <= 0.0):
        raise ValueError("maturities must be positive")
    if np.unique(t).size < t.size:
        raise ValueError("maturities must be distinct")

    best = None
    for tau1, tau2 in itertools.product(TAU_GRID, TAU_GRID):
        betas, rmse = _lstsq_betas(t, y, tau1, tau2)
        if best is None or rmse < best[0]:
            best = (rmse, tau1, tau2)

    def objective(log_tau):
        return _lstsq_betas(t, y, *np.exp(log_tau))[1]

    res = minimize(objective, np.log(best[1:]), method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000})
    tau1, tau2 = np.exp(res.x) if res.fun <= best[0] else best[1:]
    betas, rmse = _lstsq_betas(t, y, tau1, tau2)
    return NssFit(NssParams(*map(float, betas), float(tau1), float(tau2)), rmse)


def load_curve_observations(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``maturity_years,zero_rate`` CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    header = [h.strip() for h in rows[0]]
    if header != ["maturity_years", "zero_rate"]:
        raise ValueError(f"{path}: expected header 'maturity_years,zero_rate', got {header}")
    data = np.array([[float(c) for c in r] for r in rows[1:]])
    return data[:, 0], data[:, 1]


def load_curve(path: str | Path) -> NssFit:
    return fit_nss(*load_curve_observations(path))


def bundled_curve_path() -> Path:
    return Path(str(resources.files("namerisk") / "data" / "us_curve_2022.csv"))


def bundled_curve() -> NssParams:
    """NSS fit to the bundled end-2022 US Treasury yields."""
    return load_curve(bundled_curve_path()).params
