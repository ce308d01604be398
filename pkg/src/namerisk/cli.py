"""Command-line front end.

Exit codes: 0 success, 1 input or configuration error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

import numpy as np

from .estimation import ESTIMATORS, EstimationError, calibrate_xi, load_default_series, xi_mse
from .fixtures import FixtureError
from .ga_analytic import GammaQuantileError, XI_SP
from .mc import SimulationError, ga_mc_mtm
from .mtm import BondSpec, MtmError, build_mtm_model, price_bond
from .portfolio import LgdSpec, PortfolioError
from .ratings import RatingError
from .report import (CONFIG_KEYS, SWEEP_AXES, SWEEP_TARGETS, ConfigError, PortfolioRunError, atomic_write,
                     load_config, resolve_inputs, run_report, run_sweep, sweep_csv_text, write_report)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

INPUT_ERRORS = (ConfigError, PortfolioError, RatingError, FixtureError, FileNotFoundError, OSError)
NUMERIC_ERRORS = (PortfolioRunError, SimulationError, MtmError, GammaQuantileError, EstimationError,
                  ArithmeticError, ValueError, RuntimeError)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'key = value' run config file")
    p.add_argument("--out", default=".", help="output directory (default: current directory)")
    for key in CONFIG_KEYS:
        p.add_argument(f"--{key}", f"--{key.replace('_', '-')}", dest=key, metavar="VALUE", default=None)


def _overrides(ns: argparse.Namespace) -> dict:
    return {k: getattr(ns, k) for k in CONFIG_KEYS if getattr(ns, k, None) is not None}


def _floats(text: str, key: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {text!r}") from None


def cmd_ga_report(ns) -> int:
    cfg = load_config(ns.config, _overrides(ns))
    inputs = resolve_inputs(cfg)
    rows = run_report(inputs)
    paths = write_report(rows, cfg, ns.out)
    print((Path(ns.out) / "report.txt").read_text(encoding="utf-8"), end="")
    print("wrote " + ", ".join(str(p) for p in paths))
    return EXIT_OK


def cmd_sweep(ns) -> int:
    cfg = load_config(ns.config, _overrides(ns))
    values = _floats(ns.values, "values")
    if not values:
        raise ConfigError("values: empty sweep axis")
    inputs = resolve_inputs(cfg)
    rows = run_sweep(inputs, ns.axis, values, ns.target)
    path = atomic_write(Path(ns.out) / f"sweep_{ns.axis}.csv", sweep_csv_text(rows, cfg))
    for r in rows:
        se = "" if r["se_pct"] is None else f" +/- {1.96 * r['se_pct']:.2f}"
        print(f"{r['portfolio']:>10s}  {ns.axis}={r['value']:<8g} {ns.target} = {r['ga_pct']:.3f}%{se}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_calibrate_xi(ns) -> int:
    cfg = load_config(ns.config, _overrides(ns))
    inputs = resolve_inputs(cfg)
    params, tm = inputs.params, inputs.tm
    names = list(inputs.portfolios)
    portfolios = [inputs.portfolios[n] for n in names]
    maturity = 1.0 if cfg.maturity_mode == "one-year" else None
    targets = []
    for name, p in zip(names, portfolios):
        pm = p.with_maturity(1.0) if maturity == 1.0 else p
        try:
            model = build_mtm_model(pm, tm, inputs.curve, params, "ratings")
            targets.append(ga_mc_mtm(model, params).value)
        except (ValueError, ArithmeticError, RuntimeError) as exc:
            raise PortfolioRunError(f"portfolio {name!r}: {exc}") from exc
    res = calibrate_xi(portfolios, targets, tm, params, maturity)
    singles = [calibrate_xi([p], [t], tm, params, maturity).xi for p, t in zip(portfolios, targets)]
    mse_sp = xi_mse(portfolios, targets, tm, params, XI_SP, maturity)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["portfolio", "target_ga_pct", "ga_approx_pct", "residual_pct", "xi_individual"])
    for n, t, g, r, s in zip(names, targets, res.ga_approx, res.residuals, singles):
        w.writerow([n, repr(100 * float(t)), repr(100 * float(g)), repr(100 * float(r)), repr(float(s))])
    w.writerow(["# xi_star", repr(float(res.xi)), "mse", repr(float(res.mse)), "mse_at_0.25", repr(float(mse_sp))])
    path = atomic_write(Path(ns.out) / "xi_calibration.csv", buf.getvalue())
    print(f"xi* = {res.xi:.6g}  MSE = {res.mse:.6g}  MSE(xi=0.25) = {mse_sp:.6g}"
          + ("  (at search bound)" if res.at_bound else ""))
    for n, s, r in zip(names, singles, res.residuals):
        print(f"{n:>10s}  individual xi = {s:.4g}  residual = {100 * r:+.3f}%")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_estimate_rho(ns) -> int:
    if not Path(ns.series).exists():
        raise ConfigError(f"series: file not found: {ns.series}")
    try:
        series = load_default_series(ns.series)
    except EstimationError as exc:
        raise ConfigError(f"series: {exc}") from None
    methods = list(ESTIMATORS) if ns.method == "all" else [ns.method]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "rho_hat", "pd_hat"])
    for m in methods:
        est = ESTIMATORS[m](series, ns.elgd, ns.q) if m == "beta-match" else ESTIMATORS[m](series)
        w.writerow([m, repr(float(est.rho_hat)), repr(float(est.pd_hat))])
        print(f"{m:>10s}  rho = {est.rho_hat:.4f}  pd = {est.pd_hat:.5f}")
    path = atomic_write(Path(ns.out) / "rho_estimates.csv", buf.getvalue())
    print(f"wrote {path}")
    return EXIT_OK


def cmd_price_bond(ns) -> int:
    cfg = load_config(ns.config, _overrides(ns))
    inputs = resolve_inputs(cfg, need_portfolios=False)
    tm, params = inputs.tm, inputs.params
    try:
        g = tm.scale.index(ns.grade)
    except RatingError as exc:
        raise ConfigError(f"grade: {exc}") from None
    coupon = cfg.coupon_default if ns.coupon is None else ns.coupon
    spec = BondSpec(coupon, ns.maturity, cfg.accrual, cfg.horizon)
    lgd = LgdSpec(cfg.effective_elgd, cfg.nu)
    rho_grade = params.rn_correlations(np.clip(tm.p[:, 0], 1e-6, 1 - 1e-6))
    p0 = price_bond(spec, g, inputs.curve, tm, lgd, params.psi, float(rho_grade[g]))
    print(f"grade {ns.grade}: coupon {coupon}, maturity {ns.maturity}, horizon {cfg.horizon}")
    print(f"  P0 = {p0:.6f}")
    for s in range(tm.scale.S, -1, -1):
        pt = price_bond(spec, g, inputs.curve, tm, lgd, params.psi, float(rho_grade[s]) if s else 0.0, state=s)
        print(f"  PT({tm.scale.symbol(s)}) = {pt:.6f}   return {pt / p0:.6f}")
    return EXIT_OK


def cmd_validate(ns) -> int:
    cfg = load_config(ns.config, _overrides(ns))
    inputs = resolve_inputs(cfg, need_portfolios=False)
    tm = inputs.tm
    print(f"matrix: {tm.scale.S} non-default grades, worst-grade PD {tm.p[1, 0]:.4%}")
    print(f"curve: {inputs.curve}")
    for name, p in inputs.portfolios.items():
        print(f"portfolio {name}: {len(p)} borrowers, total exposure {p.exposures.sum():.6g}")
    print("inputs OK")
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); argparse's own code 2 is reserved for numerical failures."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="namerisk", description="Granularity adjustments for concentrated loan books")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ga-report", help="GA table for one or more portfolios")
    _add_config_flags(p)
    p.set_defaults(func=cmd_ga_report)

    p = sub.add_parser("sweep", help="GA sensitivity along one axis")
    _add_config_flags(p)
    p.add_argument("--axis", required=True, choices=SWEEP_AXES)
    p.add_argument("--values", required=True, help="comma-separated axis values")
    p.add_argument("--target", default="ga_mc_irb", choices=SWEEP_TARGETS)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate-xi", help="fit xi to simulated ratings-based MtM GAs")
    _add_config_flags(p)
    p.set_defaults(func=cmd_calibrate_xi)

    p = sub.add_parser("estimate-rho", help="asset correlation from a default-rate series")
    p.add_argument("--series", required=True, help="CSV with columns year,cohort_size,defaults")
    p.add_argument("--method", default="all", choices=["all", *ESTIMATORS])
    p.add_argument("--elgd", type=float, default=0.45)
    p.add_argument("--q", type=float, default=0.999)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_estimate_rho)

    p = sub.add_parser("price-bond", help="state price table for one bond (diagnostic)")
    _add_config_flags(p)
    p.add_argument("--grade", required=True)
    p.add_argument("--maturity", type=float, required=True)
    p.add_argument("--coupon", type=float, default=None)
    p.set_defaults(func=cmd_price_bond)

    p = sub.add_parser("validate", help="load and check inputs only")
    _add_config_flags(p)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        return ns.func(ns)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
