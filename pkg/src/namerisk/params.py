"""Run parameters shared by the analytic and simulation engines."""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace

import numpy as np

RHO_MODES = ("irb", "fixed")
RN_RHO_MODES = ("run", "irb", "fixed")


@dataclass(frozen=True)
class RiskParams:
    """Model and simulation settings.

    ``rho_mode`` selects the IRB correlation formula or ``rho_fixed`` for every
    borrower. ``rn_rho`` picks the correlation used in the risk-neutral PD
    transform (``"run"`` follows ``rho_mode``). ``nu`` and ``elgd`` are the
    portfolio-level LGD defaults applied when positions are loaded.
    """

    q: float = 0.999
    n_scenarios: int = 4_000_000
    seed: int = 20221231
    nu: float = 0.0
    xi: float = 0.25
    psi: float = 0.4
    elgd: float = 0.45
    rho_mode: str = "irb"
    rho_fixed: float = 0.35
    rn_rho: str = "run"
    ma_clamp: bool = True
    horizon: float = 1.0
    accrual: float = 0.5
    n_jobs: int = 1
    antithetic: bool = False

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")
        if int(self.n_scenarios) != self.n_scenarios or self.n_scenarios < 10_000:
            raise ValueError(f"n_scenarios must be an integer >= 10000, got {self.n_scenarios}")
        if not 0.0 <= self.nu <= 1.0:
            raise ValueError(f"nu must lie in [0, 1], got {self.nu}")
        if not self.xi > 0.0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if self.rho_mode not in RHO_MODES:
            raise ValueError(f"rho_mode must be one of {RHO_MODES}, got {self.rho_mode!r}")
        if self.rn_rho not in RN_RHO_MODES:
            raise ValueError(f"rn_rho must be one of {RN_RHO_MODES}, got {self.rn_rho!r}")
        if not 0.0 < self.rho_fixed < 1.0:
            raise ValueError(f"rho_fixed must lie in (0, 1), got {self.rho_fixed}")
        if not self.horizon > 0.0 or not self.accrual > 0.0:
            raise ValueError("horizon and accrual must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be >= 1")

    def correlations(self, pd) -> np.ndarray:
        """Per-borrower asset correlation under ``rho_mode``."""
        from .irb import asset_correlation_irb

        pd = np.asarray(pd, dtype=float)
        if self.rho_mode == "irb":
            return asset_correlation_irb(pd)
        return np.full(pd.shape, self.rho_fixed)

    def rn_correlations(self, pd) -> np.ndarray:
        """Correlations fed to the risk-neutral PD transform."""
        mode = self.rho_mode if self.rn_rho == "run" else self.rn_rho
        return replace(self, rho_mode=mode).correlations(pd)

    def replace(self, **changes) -> "RiskParams":
        return replace(self, **changes)

    def as_dict(self) -> dict:
        return asdict(self)
