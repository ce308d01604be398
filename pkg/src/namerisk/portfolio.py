"""Loan portfolio data model and CSV ingestion."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ratings import DEFAULT_SYMBOL, RatingError, RatingScale

DEFAULT_COUPON = 0.01
DEFAULT_MATURITY = 1.0
DEFAULT_ELGD = 0.45

REQUIRED_COLUMNS = ("borrower_id", "exposure", "rating")
OPTIONAL_COLUMNS = ("maturity_years", "coupon_rate", "elgd")


class PortfolioError(ValueError):
    """Raised for invalid portfolio data."""


@dataclass(frozen=True)
class LgdSpec:
    """Beta LGD with mean ``elgd`` and variance ``nu * elgd * (1 - elgd)``."""

    elgd: float = DEFAULT_ELGD
    nu: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.elgd <= 1.0:
            raise PortfolioError(f"elgd must lie in [0, 1], got {self.elgd}")
        if not 0.0 <= self.nu <= 1.0:
            raise PortfolioError(f"nu must lie in [0, 1], got {self.nu}")

    @property
    def vlgd2(self) -> float:
        return self.nu * self.elgd * (1.0 - self.elgd)

    @property
    def vlgd(self) -> float:
        return math.sqrt(self.vlgd2)

    @property
    def deterministic(self) -> bool:
        return self.nu == 0.0


@dataclass(frozen=True)
class LoanPosition:
    borrower_id: str
    exposure: float
    rating: str
    maturity: float = DEFAULT_MATURITY
    coupon: float = DEFAULT_COUPON
    lgd: LgdSpec = LgdSpec()

    def __post_init__(self):
        if not self.borrower_id:
            raise PortfolioError("borrower_id must be non-empty")
        if not (self.exposure > 0.0 and math.isfinite(self.exposure)):
            raise PortfolioError(f"{self.borrower_id}: exposure must be positive, got {self.exposure}")
        if not (self.maturity > 0.0 and math.isfinite(self.maturity)):
            raise PortfolioError(f"{self.borrower_id}: maturity must be positive, got {self.maturity}")
        if not 0.0 <= self.coupon < 1.0:
            raise PortfolioError(f"{self.borrower_id}: coupon must lie in [0, 1), got {self.coupon}")
        if self.rating == DEFAULT_SYMBOL:
            raise PortfolioError(f"{self.borrower_id}: rating must be a non-default grade")


@dataclass(frozen=True)
class Portfolio:
    positions: tuple[LoanPosition, ...]
    scale_id: str = ""

    def __post_init__(self):
        positions = tuple(self.positions)
        object.__setattr__(self, "positions", positions)
        if not positions:
            raise PortfolioError("portfolio has no positions")
        ids = [p.borrower_id for p in positions]
        if len(set(ids)) != len(ids):
            dup = next(i for i in ids if ids.count(i) > 1)
            raise PortfolioError(f"duplicate borrower_id {dup!r}")

    def __len__(self) -> int:
        return len(self.positions)

    @property
    def exposures(self) -> np.ndarray:
        return np.array([p.exposure for p in self.positions])

    @property
    def ratings(self) -> list[str]:
        return [p.rating for p in self.positions]

    @property
    def maturities(self) -> np.ndarray:
        return np.array([p.maturity for p in self.positions])

    @property
    def coupons(self) -> np.ndarray:
        return np.array([p.coupon for p in self.positions])

    @property
    def elgd(self) -> np.ndarray:
        return np.array([p.lgd.elgd for p in self.positions])

    @property
    def nu(self) -> np.ndarray:
        return np.array([p.lgd.nu for p in self.positions])

    def grade_indices(self, scale: RatingScale) -> np.ndarray:
        return np.array([scale.index(r) for r in self.ratings], dtype=np.intp)

    def with_lgd(self, elgd: float | None = None, nu: float | None = None) -> "Portfolio":
        """Copy with ELGD and/or nu replaced on every position."""
        def swap(p: LoanPosition) -> LoanPosition:
            lgd = LgdSpec(p.lgd.elgd if elgd is None else elgd, p.lgd.nu if nu is None else nu)
            return replace(p, lgd=lgd)
        return replace(self, positions=tuple(swap(p) for p in self.positions))

    def with_maturity(self, maturity: float) -> "Portfolio":
        return replace(self, positions=tuple(replace(p, maturity=maturity) for p in self.positions))

    def with_coupon(self, coupon: float) -> "Portfolio":
        return replace(self, positions=tuple(replace(p, coupon=coupon) for p in self.positions))

    def scaled(self, factor: float) -> "Portfolio":
        return replace(self, positions=tuple(replace(p, exposure=p.exposure * factor) for p in self.positions))


def exposure_shares(p: Portfolio) -> np.ndarray:
    """Exposure shares ``a_n = A_n / sum(A)`` in position order."""
    a = p.exposures
    return a / math.fsum(a)


def _parse_float(value: str, column: str, where: str) -> float:
    try:
        out = float(value)
    except ValueError:
        raise PortfolioError(f"{where}: column {column!r}: cannot parse {value!r}") from None
    if not math.isfinite(out):
        raise PortfolioError(f"{where}: column {column!r}: non-finite value {value!r}")
    return out


def _data_lines(fh: Iterable[str]) -> Iterable[str]:
    for line in fh:
        if line.lstrip().startswith("#") or not line.strip():
            continue
        yield line


def load_portfolio(
    path: str | Path,
    scale: RatingScale,
    default_lgd: LgdSpec = LgdSpec(),
    default_coupon: float = DEFAULT_COUPON,
    default_maturity: float = DEFAULT_MATURITY,
) -> Portfolio:
    """Parse a portfolio CSV and validate it against ``scale``.

    Per-row ``elgd`` values override ``default_lgd.elgd``; ``nu`` always comes
    from ``default_lgd``.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(_data_lines(fh))
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise PortfolioError(f"{path}: empty file") from None
        unknown = [h for h in header if h not in REQUIRED_COLUMNS + OPTIONAL_COLUMNS]
        if unknown:
            raise PortfolioError(f"{path}: unknown column(s) {unknown}")
        missing = [h for h in REQUIRED_COLUMNS if h not in header]
        if missing:
            raise PortfolioError(f"{path}: missing required column(s) {missing}")
        if len(set(header)) != len(header):
            raise PortfolioError(f"{path}: duplicate column names")

        positions = []
        for row_no, row in enumerate(reader, start=1):
            where = f"{path} row {row_no}"
            if len(row) != len(header):
                raise PortfolioError(f"{where}: expected {len(header)} fields, got {len(row)}")
            rec = dict(zip(header, (c.strip() for c in row)))
            rating = rec["rating"]
            try:
                scale.index(rating)
            except RatingError:
                raise PortfolioError(f"{where}: unknown rating symbol {rating!r}") from None
            exposure = _parse_float(rec["exposure"], "exposure", where)
            if exposure <= 0.0:
                raise PortfolioError(f"{where}: non-positive exposure {exposure}")
            lgd = default_lgd
            if rec.get("elgd", "") != "":
                lgd = LgdSpec(_parse_float(rec["elgd"], "elgd", where), default_lgd.nu)
            maturity = default_maturity
            if rec.get("maturity_years", "") != "":
                maturity = _parse_float(rec["maturity_years"], "maturity_years", where)
            coupon = default_coupon
            if rec.get("coupon_rate", "") != "":
                coupon = _parse_float(rec["coupon_rate"], "coupon_rate", where)
            try:
                positions.append(LoanPosition(rec["borrower_id"], exposure, rating, maturity, coupon, lgd))
            except PortfolioError as exc:
                raise PortfolioError(f"{where}: {exc}") from None
    if not positions:
        raise PortfolioError(f"{path}: portfolio has no positions")
    return Portfolio(tuple(positions), scale.scale_id)


def save_portfolio(p: Portfolio, path: str | Path, columns: Sequence[str] = OPTIONAL_COLUMNS) -> None:
    """Write ``p`` in the CSV layout read by :func:`load_portfolio`."""
    cols = list(REQUIRED_COLUMNS) + [c for c in OPTIONAL_COLUMNS if c in columns]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for pos in p.positions:
            rec = {
                "borrower_id": pos.borrower_id,
                "exposure": repr(float(pos.exposure)),
                "rating": pos.rating,
                "maturity_years": repr(float(pos.maturity)),
                "coupon_rate": repr(float(pos.coupon)),
                "elgd": repr(float(pos.lgd.elgd)),
            }
            w.writerow([rec[c] for c in cols])
