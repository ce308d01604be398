"""Synthetic portfolios shaped like published MDB summary statistics.

Per-borrower exposures of the development banks are not public, so the
fixtures only match portfolio size, total exposure, exposure-weighted average
PD and average maturity, plus a steep exposure concentration (about half of
the exposure on the largest tenth of borrowers, three quarters on the
largest fifth).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .portfolio import DEFAULT_COUPON, DEFAULT_ELGD, LgdSpec, LoanPosition, Portfolio, load_portfolio, save_portfolio
from .ratings import TransitionMatrix, bundled_matrix, floor_pd

TOP_DECILE_SHARE = 0.5
TOP_QUINTILE_SHARE = 0.75
EXPOSURE_JITTER = 0.02
PD_REPAIR_TOL = 0.01
PD_MATCH_TOL = 0.05
MISSING_MATURITY = 5.0


class FixtureError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticPortfolioSpec:
    name: str
    n_borrowers: int
    total_exposure: float
    avg_pd: float
    avg_maturity: float
    seed: int
    top_decile_share: float = TOP_DECILE_SHARE
    coupon: float = DEFAULT_COUPON
    elgd: float = DEFAULT_ELGD

    def __post_init__(self):
        if self.n_borrowers < 1:
            raise FixtureError("n_borrowers must be >= 1")
        if not self.total_exposure > 0.0:
            raise FixtureError("total_exposure must be positive")
        if not 0.0 < self.avg_pd < 1.0:
            raise FixtureError("avg_pd must lie in (0, 1)")
        if not self.avg_maturity > 0.0:
            raise FixtureError("avg_maturity must be positive")


# name, N, total exposure (USD m), average PD (%), average maturity (None when not reported)
TABLE1 = (
    ("CAF", 16, 28574.0, 1.46, 5.09),
    ("ADB", 38, 145036.0, 0.18, 8.20),
    ("AFDB", 29, 28174.0, 1.46, 5.62),
    ("IDB", 26, 108520.0, 0.90, 8.48),
    ("CDB", 16, 1327.0, 2.38, None),
    ("CABEI", 11, 9255.0, 1.46, 5.39),
    ("EADB", 4, 135.0, 2.38, 2.82),
    ("EBRD", 38, 47272.0, 0.90, None),
    ("IBRD", 78, 229344.0, 0.40, 7.08),
    ("TDB", 21, 6506.0, 51.47, 1.64),
    ("BOAD", 8, 3868.0, 2.38, 4.59),
)

LOW_RATING_FIXTURE = "TDB"
DEMO_FIXTURE = "DEMO10"


def table1_specs() -> list[SyntheticPortfolioSpec]:
    return [
        SyntheticPortfolioSpec(name, n, total, pd / 100.0, MISSING_MATURITY if m is None else m, seed=1000 + i)
        for i, (name, n, total, pd, m) in enumerate(TABLE1)
    ]


def demo_spec() -> SyntheticPortfolioSpec:
    """Small mixed-grade book used by the quick examples."""
    return SyntheticPortfolioSpec(DEMO_FIXTURE, 10, 1000.0, 0.0238, 3.0, seed=7)


def top_share(shares, fraction: float) -> float:
    """Exposure share held by the largest ``ceil(fraction * N)`` borrowers."""
    s = np.sort(np.asarray(shares, dtype=float))[::-1]
    k = max(1, math.ceil(fraction * s.size))
    return float(s[:k].sum() / s.sum())


def exposure_profile(n: int, top_decile_share: float = TOP_DECILE_SHARE,
                     top_quintile_share: float = TOP_QUINTILE_SHARE) -> np.ndarray:
    """Decreasing shares ``exp(-b (r / n)^g)`` for ranks ``r = 0..n-1``.

    ``(b, g)`` are fitted by least squares to the shares of the largest
    ``ceil(0.1 n)`` and ``ceil(0.2 n)`` borrowers.
    """
    if n == 1:
        return np.ones(1)
    x = np.arange(n) / n
    k1, k2 = max(1, math.ceil(0.1 * n)), max(1, math.ceil(0.2 * n))

    def weights(theta):
        w = np.exp(-np.exp(theta[0]) * x ** np.exp(theta[1]))
        return w / w.sum()

    def loss(theta):
        w = weights(theta)
        return (w[:k1].sum() - top_decile_share) ** 2 + (w[:k2].sum() - top_quintile_share) ** 2

    # b <= 12 keeps the smallest share above ~6e-6 of the largest
    res = minimize(loss, x0=[math.log(7.0), 0.0], method="Nelder-Mead",
                   bounds=[(math.log(0.1), math.log(12.0)), (math.log(0.5), math.log(2.0))],
                   options={"xatol": 1e-10, "fatol": 1e-16, "maxiter": 4000})
    return weights(res.x)


def _weighted_pd(shares, pds, grades) -> float:
    return math.fsum(shares * pds[grades])


def assign_grades(shares: np.ndarray, target_pd: float, tm: TransitionMatrix, rng: np.random.Generator) -> np.ndarray:
    """Grades scattered one notch around the grade nearest ``target_pd``, repaired greedily toward the target.

    A single borrower simply takes the nearest grade. Otherwise raises
    :class:`FixtureError` when no assignment comes within 5% relative.
    """
    pds = floor_pd(tm.p[:, 0])
    S = tm.scale.S
    if not pds[1:].min() * (1 - PD_MATCH_TOL) <= target_pd <= pds[1:].max() * (1 + PD_MATCH_TOL):
        raise FixtureError(f"target PD {target_pd} outside the grade PD range "
                           f"[{pds[1:].min()}, {pds[1:].max()}]")
    home = 1 + int(np.argmin(np.abs(np.log(pds[1:]) - math.log(target_pd))))
    n = len(shares)
    if n == 1:
        return np.full(1, home)
    grades = np.clip(home + rng.integers(-1, 2, size=n), 1, S)

    def err(g):
        return abs(_weighted_pd(shares, pds, g) / target_pd - 1.0)

    current = err(grades)
    while current > PD_REPAIR_TOL:
        best, best_err = None, current
        for i in range(n):
            for step in (-1, 1):
                g = grades[i] + step
                if not (1 <= g <= S and abs(g - home) <= 1):
                    continue
                trial = grades.copy()
                trial[i] = g
                e = err(trial)
                if e < best_err:
                    best, best_err = trial, e
        if best is None:
            break
        grades, current = best, best_err
    flat = np.full(n, home)
    if current > PD_REPAIR_TOL and err(flat) < current:
        grades, current = flat, err(flat)
    if current > PD_MATCH_TOL:
        raise FixtureError(f"cannot match average PD {target_pd} within {PD_MATCH_TOL:.0%}: "
                           f"best relative error {current:.3g}")
    return grades


def generate_synthetic(spec: SyntheticPortfolioSpec, tm: TransitionMatrix | None = None) -> Portfolio:
    """Deterministic portfolio for ``spec``; the seed drives exposure jitter and grade scatter."""
    tm = bundled_matrix() if tm is None else tm
    rng = np.random.default_rng(spec.seed)
    w = exposure_profile(spec.n_borrowers, spec.top_decile_share)
    if spec.n_borrowers > 1:
        w = np.sort(w * np.exp(EXPOSURE_JITTER * rng.standard_normal(w.size)))[::-1]
    exposures = spec.total_exposure * w / w.sum()
    grades = assign_grades(exposures / exposures.sum(), spec.avg_pd, tm, rng)
    width = len(str(spec.n_borrowers))
    lgd = LgdSpec(spec.elgd)
    positions = tuple(
        LoanPosition(f"{spec.name}-{i + 1:0{width}d}", float(e), tm.scale.symbol(int(g)),
                     spec.avg_maturity, spec.coupon, lgd)
        for i, (e, g) in enumerate(zip(exposures, grades))
    )
    return Portfolio(positions, tm.scale.scale_id)


def fixtures_dir() -> Path:
    return Path(str(resources.files("namerisk") / "data" / "fixtures"))


def fixture_path(name: str) -> Path:
    return fixtures_dir() / f"{name.lower()}.csv"


def load_fixture(name: str, tm: TransitionMatrix | None = None, lgd: LgdSpec | None = None) -> Portfolio:
    """Bundled fixture by name (case-insensitive). ``lgd`` overrides the stored ELGD and sets nu."""
    tm = bundled_matrix() if tm is None else tm
    path = fixture_path(name)
    if not path.exists():
        raise FixtureError(f"no bundled fixture named {name!r}")
    p = load_portfolio(path, tm.scale)
    return p if lgd is None else p.with_lgd(lgd.elgd, lgd.nu)


def load_table1_fixtures(tm: TransitionMatrix | None = None, lgd: LgdSpec | None = None) -> dict[str, Portfolio]:
    return {name: load_fixture(name, tm, lgd) for name, *_ in TABLE1}


def write_fixtures(directory: str | Path | None = None) -> list[Path]:
    """Regenerate every bundled fixture CSV."""
    directory = fixtures_dir() if directory is None else Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    out = []
    for spec in table1_specs() + [demo_spec()]:
        path = directory / f"{spec.name.lower()}.csv"
        save_portfolio(generate_synthetic(spec), path)
        out.append(path)
    return out
