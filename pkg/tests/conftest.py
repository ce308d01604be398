import numpy as np
import pytest

from namerisk.portfolio import LgdSpec, LoanPosition, Portfolio
from namerisk.ratings import RatingScale, TransitionMatrix, bundled_matrix
from namerisk.yieldcurve import NssParams, bundled_curve


@pytest.fixture(scope="session")
def tm():
    return bundled_matrix()


@pytest.fixture(scope="session")
def curve():
    return bundled_curve()


@pytest.fixture(scope="session")
def flat3():
    return NssParams.flat(0.03)


def make_portfolio(exposures, ratings, maturity=1.0, coupon=0.01, elgd=0.45, nu=0.0, prefix="B"):
    if isinstance(ratings, str):
        ratings = [ratings] * len(exposures)
    lgd = LgdSpec(elgd, nu)
    return Portfolio(tuple(LoanPosition(f"{prefix}{i}", float(e), r, maturity, coupon, lgd)
                           for i, (e, r) in enumerate(zip(exposures, ratings))))


def one_grade_matrix(pd: float, symbol: str = "G") -> TransitionMatrix:
    """Two-state scale {D, G} with one-year default probability ``pd``."""
    scale = RatingScale.from_best_to_worst([symbol, "D"])
    return TransitionMatrix(scale, np.array([[1.0, 0.0], [pd, 1.0 - pd]]))


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
