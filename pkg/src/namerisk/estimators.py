"""scikit-learn style wrappers for the fitted parts of the library.

Only steps that are genuinely "fit then use" are wrapped: the NSS curve, the
asset-correlation estimators and the ``xi`` calibration. Risk engines stay
plain functions of (portfolio, matrix, params).
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .estimation import ESTIMATORS, XI_BOUNDS, DefaultRateSeries, EstimationError, calibrate_xi
from .ga_analytic import ga_approx
from .params import RiskParams
from .ratings import bundled_matrix
from .yieldcurve import fit_nss, zero_rate


def _as_maturities(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"expected a single maturity column, got shape {X.shape}")
        X = X[:, 0]
    return X


class NelsonSiegelSvensson(RegressorMixin, BaseEstimator):
    """Zero-rate curve regressor: ``fit(maturities, rates)``, ``predict(maturities)``."""

    def fit(self, X, y):
        fit = fit_nss(_as_maturities(X), np.asarray(y, dtype=float))
        self.params_ = fit.params
        self.rmse_ = fit.rmse
        return self

    def predict(self, X):
        check_is_fitted(self, "params_")
        return zero_rate(self.params_, _as_maturities(X))


class AssetCorrelationEstimator(BaseEstimator):
    """Fits ``(PD, rho)`` to a default-rate series.

    ``X`` is a :class:`DefaultRateSeries` or an array of ``(cohort_size, defaults)`` rows.
    """

    def __init__(self, method: str = "mle", elgd: float = 0.45, q: float = 0.999):
        self.method = method
        self.elgd = elgd
        self.q = q

    def fit(self, X, y=None):
        if self.method not in ESTIMATORS:
            raise ValueError(f"method must be one of {sorted(ESTIMATORS)}, got {self.method!r}")
        series = X if isinstance(X, DefaultRateSeries) else self._series(X)
        if self.method == "beta-match":
            est = ESTIMATORS[self.method](series, self.elgd, self.q)
        else:
            est = ESTIMATORS[self.method](series)
        self.rho_ = est.rho_hat
        self.pd_ = est.pd_hat
        self.result_ = est
        return self

    @staticmethod
    def _series(X) -> DefaultRateSeries:
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != 2:
            raise EstimationError(f"expected rows of (cohort_size, defaults), got shape {X.shape}")
        return DefaultRateSeries.from_counts(X[:, 0], X[:, 1])


class XiCalibrator(BaseEstimator):
    """Calibrates the CreditRisk+ factor precision ``xi``.

    ``fit(portfolios, targets)`` takes exact GAs (fractions of EAD) as targets;
    ``predict(portfolios)`` returns analytic GAs at the fitted ``xi``.
    """

    def __init__(self, params: RiskParams | None = None, tm=None, maturity=None,
                 bounds: tuple[float, float] = XI_BOUNDS):
        self.params = params
        self.tm = tm
        self.maturity = maturity
        self.bounds = bounds

    def _resolved(self):
        return (self.params or RiskParams()), (self.tm if self.tm is not None else bundled_matrix())

    def fit(self, X, y):
        params, tm = self._resolved()
        res = calibrate_xi(list(X), y, tm, params, self.maturity, self.bounds)
        self.xi_ = res.xi
        self.mse_ = res.mse
        self.residuals_ = res.residuals
        self.result_ = res
        return self

    def predict(self, X):
        check_is_fitted(self, "xi_")
        params, tm = self._resolved()
        params = params.replace(xi=self.xi_)
        return np.array([ga_approx(p, tm, params, self.maturity).ga_full for p in X])
