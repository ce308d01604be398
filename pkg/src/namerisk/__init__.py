"""Name concentration risk in small loan portfolios.

Exact (Monte Carlo) and analytic granularity adjustments in the actuarial
IRB model and a ratings-based mark-to-market model, with the supporting
rating, yield-curve, estimation and fixture tooling.
"""

from .estimation import (CorrelationEstimate, DefaultRateSeries, calibrate_xi, estimate_rho_beta_match,
                         estimate_rho_mle, estimate_rho_mom)
from .estimators import AssetCorrelationEstimator, NelsonSiegelSvensson, XiCalibrator
from .fixtures import SyntheticPortfolioSpec, generate_synthetic, load_fixture, load_table1_fixtures
from .ga_analytic import delta_factor, ga_approx, gamma_quantile, relative_ga
from .irb import asset_correlation_irb, capital_and_reserve, conditional_pd, maturity_adjustment
from .mc import McEstimate, ga_mc_actuarial, ga_mc_mtm, quantile_std_error, simulate_actuarial_var
from .mtm import BondSpec, build_mtm_model, ga_mtm_approx, price_bond
from .params import RiskParams
from .portfolio import LgdSpec, LoanPosition, Portfolio, load_portfolio, save_portfolio
from .ratings import RatingScale, TransitionMatrix, bundled_matrix, load_transition_matrix, thresholds
from .yieldcurve import NssParams, bundled_curve, fit_nss

__version__ = "0.1.0"
