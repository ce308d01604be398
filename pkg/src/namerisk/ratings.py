"""Rating scales, transition matrices and the quantities derived from them.

Grades are indexed from the absorbing default state ``D`` (index 0) up to the
best grade (index ``S``). Transition-matrix CSV files list grades the other way
round (best first, ``D`` last) and hold probabilities in percent.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import ndtr, ndtri

DEFAULT_SYMBOL = "D"
NOT_RATED_SYMBOL = "NR"

PD_FLOOR = 1e-6
THRESHOLD_EPS = 1e-12
ROW_SUM_TOL = 1e-9


class RatingError(ValueError):
    """Raised for malformed scales, matrices or unknown grade symbols."""


def floor_pd(p):
    """Clip default probabilities into ``[PD_FLOOR, 1 - PD_FLOOR]``."""
    return np.clip(p, PD_FLOOR, 1.0 - PD_FLOOR)


@dataclass(frozen=True)
class RatingScale:
    """Ordered grade symbols, ``grades[0] == 'D'`` and ``grades[-1]`` the best."""

    grades: tuple[str, ...]

    def __post_init__(self):
        grades = tuple(self.grades)
        object.__setattr__(self, "grades", grades)
        if not grades or grades[0] != DEFAULT_SYMBOL:
            raise RatingError("rating scale must start with the default grade 'D'")
        if len(set(grades)) != len(grades):
            raise RatingError(f"duplicate grade symbols in scale {grades}")
        if len(grades) < 2:
            raise RatingError("rating scale needs at least one non-default grade")

    @classmethod
    def from_best_to_worst(cls, symbols: Sequence[str]) -> "RatingScale":
        """Build a scale from a best-to-worst listing that ends with ``'D'``."""
        symbols = list(symbols)
        if DEFAULT_SYMBOL not in symbols:
            symbols.append(DEFAULT_SYMBOL)
        if symbols[-1] != DEFAULT_SYMBOL:
            raise RatingError("'D' must be the last grade in a best-to-worst listing")
        return cls(tuple(reversed(symbols)))

    @property
    def S(self) -> int:
        return len(self.grades) - 1

    @property
    def scale_id(self) -> str:
        return "|".join(self.grades)

    def index(self, grade: str | int) -> int:
        if isinstance(grade, (int, np.integer)):
            if not 0 <= grade <= self.S:
                raise RatingError(f"grade index {grade} outside 0..{self.S}")
            return int(grade)
        try:
            return self.grades.index(grade)
        except ValueError:
            raise RatingError(f"unknown rating symbol {grade!r}") from None

    def symbol(self, index: int) -> str:
        return self.grades[index]

    def best_to_worst(self) -> list[str]:
        return list(reversed(self.grades))


@dataclass(frozen=True)
class TransitionMatrix:
    """Row-stochastic one-period migration table on a :class:`RatingScale`.

    ``p[g, s]`` is the probability of moving from grade ``g`` to grade ``s``
    over ``horizon`` years, with both indices in scale order (``D`` first).
    """

    scale: RatingScale
    p: np.ndarray
    horizon: float = 1.0
    _powers: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        p = np.array(self.p, dtype=float)
        n = self.scale.S + 1
        if p.shape != (n, n):
            raise RatingError(f"transition table has shape {p.shape}, expected {(n, n)}")
        if np.any(p < 0.0) or np.any(p > 1.0):
            raise RatingError("transition probabilities must lie in [0, 1]")
        sums = p.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL)
        if bad.size:
            g = self.scale.symbol(int(bad[0]))
            raise RatingError(f"row {g!r} sums to {sums[bad[0]]!r}, not 1")
        unit = np.zeros(n)
        unit[0] = 1.0
        if not np.array_equal(p[0], unit):
            raise RatingError("default row must be absorbing")
        p.setflags(write=False)
        object.__setattr__(self, "p", p)

    def power(self, k: int) -> np.ndarray:
        """k-th matrix power (cached)."""
        if k < 0:
            raise ValueError("matrix power must be non-negative")
        if k not in self._powers:
            if k == 0:
                out = np.eye(self.scale.S + 1)
            else:
                out = self.power(k - 1) @ self.p
            out.setflags(write=False)
            self._powers[k] = out
        return self._powers[k]

    def default_probability(self, grade: str | int) -> float:
        """One-period default probability of ``grade`` (no flooring)."""
        return float(self.p[self.scale.index(grade), 0])

    def to_percent_rows(self) -> list[list[str]]:
        """Rows for CSV output, best grade first, values in percent."""
        order = list(range(self.scale.S, -1, -1))
        rows = [["from"] + [self.scale.symbol(i) for i in order]]
        for g in order:
            rows.append([self.scale.symbol(g)] + [repr(float(100.0 * self.p[g, s])) for s in order])
        return rows


@dataclass(frozen=True)
class RawTransitionMatrix:
    """Unnormalized migration table as published, possibly with an ``NR`` column.

    ``from_grades`` and ``to_grades`` are best-to-worst listings; ``to_grades``
    ends with ``D`` and optionally ``NR``. Probabilities are fractions.
    """

    from_grades: tuple[str, ...]
    to_grades: tuple[str, ...]
    p: np.ndarray


@dataclass(frozen=True)
class ThresholdTable:
    """Latent-return cutoffs ``C[g, s]``; state ``s`` occupies ``(C[g, s-1], C[g, s]]``.

    ``C[g, S]`` is ``+inf``; the implicit ``C[g, -1]`` is ``-inf``.
    """

    C: np.ndarray

    def bounds(self, g: int, s: int) -> tuple[float, float]:
        lower = -np.inf if s == 0 else float(self.C[g, s - 1])
        return lower, float(self.C[g, s])


def _absorb_rounding(p: np.ndarray, diag_cols: Sequence[int], tol: float) -> np.ndarray:
    """Move per-row rounding residue into the row's own-grade entry."""
    p = p.copy()
    for i, j in enumerate(diag_cols):
        residue = 1.0 - p[i].sum()
        if abs(residue) > tol + 1e-15:
            raise RatingError(f"row {i} sums to {1.0 - residue!r}; residue exceeds tolerance {tol}")
        if j is None:
            if abs(residue) > ROW_SUM_TOL:
                raise RatingError(f"row {i} does not sum to 1 and has no diagonal entry")
            continue
        p[i, j] += residue
        if p[i, j] < 0.0:
            raise RatingError(f"row {i}: rounding residue makes the diagonal negative")
    return p


def _read_percent_table(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
    if len(rows) < 2:
        raise RatingError(f"{path}: transition matrix file has no data rows")
    header = [h.strip() for h in rows[0]]
    if header[0] == "" or header[0].lower() == "from":
        header = header[1:]
    from_grades, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        row = [c.strip() for c in row]
        if len(row) != len(header) + 1:
            raise RatingError(f"{path}:{lineno}: expected {len(header) + 1} fields, got {len(row)}")
        try:
            values.append([float(c) for c in row[1:]])
        except ValueError as exc:
            raise RatingError(f"{path}:{lineno}: {exc}") from None
        from_grades.append(row[0])
    return header, from_grades, np.array(values) / 100.0


def load_transition_matrix(path: str | Path, rounding_tol: float = 0.02) -> TransitionMatrix:
    """Read a transition-matrix CSV (percent values, best grade first).

    Published tables are rounded to two decimals, so rows may miss 100% by a
    hundredth of a point. Residues up to ``rounding_tol`` percentage points are
    folded into the staying probability; larger ones raise :class:`RatingError`.
    The default column is left untouched.
    """
    path = Path(path)
    header, from_grades, p = _read_percent_table(path)
    if NOT_RATED_SYMBOL in header:
        raise RatingError(f"{path}: 'NR' column present; use load_raw_transition_matrix")
    scale = RatingScale.from_best_to_worst(header)
    n = scale.S + 1
    if len(set(from_grades)) != len(from_grades):
        raise RatingError(f"{path}: duplicate source grades")
    table = np.zeros((n, n))
    table[0, 0] = 1.0
    seen = set()
    for g_sym, row in zip(from_grades, p):
        g = scale.index(g_sym)
        seen.add(g)
        # CSV columns are best -> D; scale order is D -> best
        table[g] = row[::-1]
    missing = [scale.symbol(g) for g in range(1, n) if g not in seen]
    if missing:
        raise RatingError(f"{path}: no rows for grades {missing}")
    rows = list(range(1, n))
    table[1:] = _absorb_rounding(table[1:], rows, rounding_tol / 100.0)
    return TransitionMatrix(scale, table)


def load_raw_transition_matrix(path: str | Path, rounding_tol: float = 0.02) -> RawTransitionMatrix:
    """Read a published matrix that may carry ``NR`` and unmerged grades."""
    path = Path(path)
    header, from_grades, p = _read_percent_table(path)
    keep = [i for i, g in enumerate(from_grades) if g != DEFAULT_SYMBOL]
    from_grades = [from_grades[i] for i in keep]
    p = p[keep]
    diag = [header.index(g) if g in header else None for g in from_grades]
    p = _absorb_rounding(p, diag, rounding_tol / 100.0)
    return RawTransitionMatrix(tuple(from_grades), tuple(header), p)


def save_transition_matrix(tm: TransitionMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        csv.writer(fh).writerows(tm.to_percent_rows())


def bundled_matrix_path() -> Path:
    return Path(str(resources.files("namerisk") / "data" / "transition_matrix.csv"))


def bundled_matrix() -> TransitionMatrix:
    """Normalized one-year sovereign foreign-currency matrix with merged ``Cs`` grade."""
    return load_transition_matrix(bundled_matrix_path())


def normalize_and_merge(raw: RawTransitionMatrix, merge_from: str, merged_symbol: str = "Cs") -> TransitionMatrix:
    """Drop the ``NR`` column and consolidate the worst grades into one.

    Each row is divided by ``1 - p_NR``. Destination columns for ``merge_from``
    and every worse non-default grade are summed; the corresponding source rows
    are averaged with equal weights.
    """
    to = list(raw.to_grades)
    p = np.array(raw.p, dtype=float)
    if p.shape != (len(raw.from_grades), len(to)):
        raise RatingError("raw matrix shape does not match its grade listings")
    if NOT_RATED_SYMBOL in to:
        j = to.index(NOT_RATED_SYMBOL)
        nr = p[:, j]
        if np.any(nr >= 1.0):
            bad = raw.from_grades[int(np.flatnonzero(nr >= 1.0)[0])]
            raise RatingError(f"row {bad!r} has NR probability 1; cannot normalize")
        p = np.delete(p, j, axis=1) / (1.0 - nr)[:, None]
        to.pop(j)
    if to[-1] != DEFAULT_SYMBOL:
        raise RatingError("destination grades must end with 'D'")
    non_default = to[:-1]
    if merge_from not in non_default:
        raise RatingError(f"merge_from grade {merge_from!r} not on the scale")
    cut = non_default.index(merge_from)
    kept, merged = non_default[:cut], non_default[cut:]

    cols = np.concatenate([p[:, :cut], p[:, cut:-1].sum(axis=1, keepdims=True), p[:, -1:]], axis=1)
    best_to_worst = kept + [merged_symbol if len(merged) > 1 else merged[0]]
    scale = RatingScale.from_best_to_worst(best_to_worst + [DEFAULT_SYMBOL])
    n = scale.S + 1
    table = np.zeros((n, n))
    table[0, 0] = 1.0
    row_of = {g: i for i, g in enumerate(raw.from_grades)}
    for k, sym in enumerate(best_to_worst):
        sources = merged if k == len(best_to_worst) - 1 else [sym]
        present = [row_of[s] for s in sources if s in row_of]
        if not present:
            raise RatingError(f"no source row for grade {sym!r}")
        table[scale.index(sym)] = cols[present].mean(axis=0)[::-1]
    return TransitionMatrix(scale, table)


def thresholds(tm: TransitionMatrix) -> ThresholdTable:
    """Cutoffs ``C[g, s] = Phi^-1(sum_{i<=s} p[g, i])`` for ``s < S``; ``C[g, S] = inf``."""
    cum = np.cumsum(tm.p, axis=1)
    cum = np.clip(cum, THRESHOLD_EPS, 1.0 - THRESHOLD_EPS)
    C = ndtri(cum)
    C[:, -1] = np.inf
    # cumulative sums are monotone, but guard against round-off after clipping
    C[:, :-1] = np.maximum.accumulate(C[:, :-1], axis=1)
    C.setflags(write=False)
    return ThresholdTable(C)


def cumulative_pd(tm: TransitionMatrix, grade: str | int, times) -> np.ndarray:
    """Cumulative default probabilities ``p_g(0, t)`` for an array of times.

    Integer times read the default column of the matrix power; other times
    interpolate linearly between neighbouring integer years.
    """
    g = tm.scale.index(grade)
    t = np.asarray(times, dtype=float) / tm.horizon
    if np.any(t < 0.0):
        raise ValueError("times must be non-negative")
    if t.size == 0:
        return np.zeros_like(t)
    top = int(np.ceil(t.max() - 1e-12))
    curve = np.array([tm.power(k)[g, 0] for k in range(top + 1)])
    return np.interp(t, np.arange(top + 1), curve)


def pd_term_structure(tm: TransitionMatrix, grade: str | int, t: float) -> float:
    return float(cumulative_pd(tm, grade, [t])[0])


def risk_neutral_pd(p, rho, horizon, psi):
    """Risk-neutral default probability ``Phi(Phi^-1(p) + psi sqrt(horizon) sqrt(rho))``."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("historical PD must lie strictly inside (0, 1); floor or cap it first")
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0.0) or np.any(rho >= 1.0):
        raise ValueError("asset correlation must lie in [0, 1)")
    horizon = np.asarray(horizon, dtype=float)
    if np.any(horizon < 0.0):
        raise ValueError("horizon must be non-negative")
    out = ndtr(ndtri(p) + psi * np.sqrt(horizon) * np.sqrt(rho))
    return out if out.ndim else float(out)
