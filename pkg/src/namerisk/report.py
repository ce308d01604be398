"""Run configuration, GA reports and sensitivity sweeps."""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .fixtures import TABLE1, fixture_path, load_fixture
from .ga_analytic import ga_approx, relative_ga
from .mc import McEstimate, ga_mc_actuarial, ga_mc_mtm
from .mtm import build_mtm_model, ga_mtm_approx
from .params import RiskParams
from .portfolio import LgdSpec, Portfolio, load_portfolio
from .ratings import TransitionMatrix, bundled_matrix, load_transition_matrix
from .yieldcurve import NssParams, bundled_curve, load_curve

MODES = ("actuarial", "mtm-default", "mtm-ratings", "all")
MATURITY_MODES = ("one-year", "file")
PCT_ELGD = 0.10
SWEEP_AXES = ("rho", "maturity", "coupon")
SWEEP_TARGETS = ("ga_mc_irb", "ga_approx", "ga_simplified", "ga_mtm_mc_default", "ga_mtm_mc_ratings", "ga_mtm_approx")


class ConfigError(ValueError):
    """Bad or missing configuration; the message names the offending key."""


def _bool(v: str) -> bool:
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _on_off(v: str) -> str:
    return "on" if _bool(v) else "off"


def _nss(v: str) -> tuple[float, ...]:
    vals = tuple(float(x) for x in str(v).split(","))
    if len(vals) != 6:
        raise ValueError("expected six comma-separated numbers beta0,beta1,beta2,beta3,tau1,tau2")
    return vals


def _paths(v: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in str(v).split(",") if s.strip())


@dataclass(frozen=True)
class RunConfig:
    """Flat key/value run configuration.

    ``portfolio_paths`` entries are CSV paths or ``fixture:NAME``;
    ``fixture:table1`` expands to the eleven synthetic MDB-shaped books.
    Empty ``elgd`` means 0.45, or 0.10 when ``pct`` is on.
    """

    q: float = 0.999
    scenarios: int = 4_000_000
    seed: int = 20221231
    nu: float = 0.0
    xi: float = 0.25
    psi: float = 0.4
    elgd: float | None = None
    rho_mode: str = "irb"
    rho_fixed: float = 0.35
    rn_rho: str = "run"
    ma_clamp: bool = True
    horizon: float = 1.0
    coupon_default: float = 0.01
    maturity_default: float = 1.0
    accrual: float = 0.5
    matrix_path: str = ""
    pct_matrix_path: str = ""
    curve_path: str = ""
    nss_params: tuple[float, ...] | None = None
    portfolio_paths: tuple[str, ...] = ()
    mode: str = "actuarial"
    maturity_mode: str = "one-year"
    pct: str = "off"
    n_jobs: int = 1
    antithetic: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"mode: must be one of {MODES}, got {self.mode!r}")
        if self.maturity_mode not in MATURITY_MODES:
            raise ConfigError(f"maturity_mode: must be one of {MATURITY_MODES}, got {self.maturity_mode!r}")
        if self.pct not in ("on", "off"):
            raise ConfigError(f"pct: must be on or off, got {self.pct!r}")

    @property
    def effective_elgd(self) -> float:
        if self.elgd is not None:
            return self.elgd
        return PCT_ELGD if self.pct == "on" else 0.45

    def risk_params(self) -> RiskParams:
        try:
            return RiskParams(q=self.q, n_scenarios=self.scenarios, seed=self.seed, nu=self.nu, xi=self.xi,
                              psi=self.psi, elgd=self.effective_elgd, rho_mode=self.rho_mode,
                              rho_fixed=self.rho_fixed, rn_rho=self.rn_rho, ma_clamp=self.ma_clamp,
                              horizon=self.horizon, accrual=self.accrual, n_jobs=self.n_jobs,
                              antithetic=self.antithetic)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def to_lines(self) -> list[str]:
        """``key = value`` lines that parse back to an identical config."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                s = ""
            elif isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, float):
                s = repr(float(v))
            elif isinstance(v, tuple):
                s = ",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
            else:
                s = str(v)
            out.append(f"{f.name} = {s}")
        return out


_PARSERS = {
    "q": float, "scenarios": int, "seed": int, "nu": float, "xi": float, "psi": float,
    "elgd": float, "rho_mode": str, "rho_fixed": float, "rn_rho": str, "ma_clamp": _bool,
    "horizon": float, "coupon_default": float, "maturity_default": float, "accrual": float,
    "matrix_path": str, "pct_matrix_path": str, "curve_path": str, "nss_params": _nss,
    "portfolio_paths": _paths, "mode": str, "maturity_mode": str, "pct": _on_off, "n_jobs": int,
    "antithetic": _bool,
}
CONFIG_KEYS = tuple(_PARSERS)


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source} line {no}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{key}: unknown config key ({source} line {no})")
        out[key] = value
    return out


def build_config(values: dict) -> RunConfig:
    """Typed config from string values; empty strings leave the default in place."""
    kw = {}
    for key, value in values.items():
        if key not in _PARSERS:
            raise ConfigError(f"{key}: unknown config key")
        if value is None:
            continue
        if isinstance(value, str) and value.strip() == "":
            if key in ("elgd", "nss_params"):
                kw[key] = None
            continue
        try:
            kw[key] = _PARSERS[key](value) if isinstance(value, str) else value
        except ValueError as exc:
            raise ConfigError(f"{key}: cannot parse {value!r} ({exc})") from None
    return RunConfig(**kw)


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    values = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config: file not found: {p}")
        values = parse_config_text(p.read_text(encoding="utf-8"), str(p))
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values)


@dataclass
class RunInputs:
    config: RunConfig
    params: RiskParams
    tm: TransitionMatrix
    curve: NssParams
    portfolios: dict[str, Portfolio] = field(default_factory=dict)


def _resolve_matrix(cfg: RunConfig) -> TransitionMatrix:
    key, path = "matrix_path", cfg.matrix_path
    if cfg.pct == "on":
        key, path = "pct_matrix_path", cfg.pct_matrix_path
        if not path:
            raise ConfigError("pct_matrix_path: required when pct = on (no PCT-adjusted matrix is bundled)")
    if not path:
        return bundled_matrix()
    if not Path(path).exists():
        raise ConfigError(f"{key}: transition matrix file not found: {path}")
    return load_transition_matrix(path)


def _resolve_curve(cfg: RunConfig) -> NssParams:
    if cfg.nss_params is not None:
        return NssParams(*cfg.nss_params)
    if not cfg.curve_path:
        return bundled_curve()
    if not Path(cfg.curve_path).exists():
        raise ConfigError(f"curve_path: curve file not found: {cfg.curve_path}")
    return load_curve(cfg.curve_path).params


def _expand_portfolio_entries(entries: Sequence[str]) -> list[str]:
    out = []
    for e in entries:
        if e.lower() == "fixture:table1":
            out.extend(f"fixture:{name}" for name, *_ in TABLE1)
        else:
            out.append(e)
    return out


def resolve_inputs(cfg: RunConfig, need_portfolios: bool = True) -> RunInputs:
    """Load matrix, curve and portfolios named in ``cfg``; errors name the config key."""
    params = cfg.risk_params()
    tm = _resolve_matrix(cfg)
    curve = _resolve_curve(cfg)
    lgd = LgdSpec(cfg.effective_elgd, cfg.nu)
    portfolios: dict[str, Portfolio] = {}
    entries = _expand_portfolio_entries(cfg.portfolio_paths)
    if need_portfolios and not entries:
        raise ConfigError("portfolio_paths: no portfolio given")
    for entry in entries:
        if entry.lower().startswith("fixture:"):
            name = entry.split(":", 1)[1]
            if not fixture_path(name).exists():
                raise ConfigError(f"portfolio_paths: no bundled fixture named {name!r}")
            p = load_fixture(name, tm).with_lgd(lgd.elgd, lgd.nu).with_coupon(cfg.coupon_default)
        else:
            if not Path(entry).exists():
                raise ConfigError(f"portfolio_paths: portfolio file not found: {entry}")
            name = Path(entry).stem
            p = load_portfolio(entry, tm.scale, lgd, cfg.coupon_default, cfg.maturity_default)
        if name in portfolios:
            raise ConfigError(f"portfolio_paths: portfolio name {name!r} appears twice")
        portfolios[name] = p
    return RunInputs(cfg, params, tm, curve, portfolios)


class PortfolioRunError(RuntimeError):
    """Numerical failure while processing one portfolio."""


def _ga_maturity(cfg: RunConfig):
    return 1.0 if cfg.maturity_mode == "one-year" else None


def _mtm_portfolio(p: Portfolio, cfg: RunConfig) -> Portfolio:
    return p.with_maturity(1.0) if cfg.maturity_mode == "one-year" else p


REPORT_GA_COLUMNS = ("ga_mc_irb", "ga_approx", "ga_simplified", "ga_mtm_mc_default", "ga_mtm_mc_ratings",
                     "ga_mtm_approx")
MC_COLUMNS = ("ga_mc_irb", "ga_mtm_mc_default", "ga_mtm_mc_ratings")
METADATA_KEYS = ("seed", "scenarios", "q", "nu", "xi", "rho_mode", "rho_fixed", "elgd", "maturity_mode", "mode",
                 "psi", "pct")


def report_columns() -> list[str]:
    cols = ["portfolio", "n_borrowers", "k_star_pct"]
    cols += [f"{c}_pct" for c in REPORT_GA_COLUMNS]
    cols += [f"rel_{c}_pct" for c in REPORT_GA_COLUMNS]
    for c in MC_COLUMNS:
        cols += [f"{c}_se_pct", f"{c}_ci95_lo_pct", f"{c}_ci95_hi_pct"]
    return cols


def _pct(x):
    return None if x is None else 100.0 * x


def portfolio_row(name: str, p: Portfolio, inputs: RunInputs) -> dict:
    """One report row; GA values in percent of total EAD."""
    cfg, params, tm, curve = inputs.config, inputs.params, inputs.tm, inputs.curve
    mode = cfg.mode
    row: dict = {"portfolio": name, "n_borrowers": len(p)}
    try:
        ap = ga_approx(p, tm, params, _ga_maturity(cfg))
        ga = {"ga_approx": ap.ga_full, "ga_simplified": ap.ga_simplified}
        mc: dict[str, McEstimate] = {}
        if mode in ("actuarial", "all"):
            mc["ga_mc_irb"] = ga_mc_actuarial(p, tm, params)
        pm = _mtm_portfolio(p, cfg)
        if mode in ("mtm-default", "all"):
            model = build_mtm_model(pm, tm, curve, params, "default")
            mc["ga_mtm_mc_default"] = ga_mc_mtm(model, params)
            ga["ga_mtm_approx"] = ga_mtm_approx(model)
        if mode in ("mtm-ratings", "all"):
            model = build_mtm_model(pm, tm, curve, params, "ratings")
            mc["ga_mtm_mc_ratings"] = ga_mc_mtm(model, params)
            ga["ga_mtm_approx"] = ga_mtm_approx(model)
    except (ValueError, ArithmeticError, RuntimeError) as exc:
        raise PortfolioRunError(f"portfolio {name!r}: {exc}") from exc
    for k, est in mc.items():
        ga[k] = est.value
        row[f"{k}_se_pct"] = _pct(est.std_error)
        row[f"{k}_ci95_lo_pct"] = _pct(est.ci95[0])
        row[f"{k}_ci95_hi_pct"] = _pct(est.ci95[1])
    row["k_star_pct"] = _pct(ap.k_star)
    for k in REPORT_GA_COLUMNS:
        v = ga.get(k)
        row[f"{k}_pct"] = _pct(v)
        row[f"rel_{k}_pct"] = None if v is None else _pct(relative_ga(v, ap.k_star))
    return row


def run_report(inputs: RunInputs) -> list[dict]:
    return [portfolio_row(name, p, inputs) for name, p in inputs.portfolios.items()]


def _fmt_full(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(float(v))
    return str(v)


def metadata_lines(cfg: RunConfig) -> list[str]:
    vals = {"elgd": cfg.effective_elgd}
    return [f"# {k} = {_fmt_full(vals.get(k, getattr(cfg, k)))}" for k in METADATA_KEYS]


def report_csv_text(rows: list[dict], cfg: RunConfig) -> str:
    buf = io.StringIO()
    for line in metadata_lines(cfg):
        buf.write(line + "\n")
    cols = report_columns()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([_fmt_full(r.get(c)) for c in cols])
    return buf.getvalue()


def report_text(rows: list[dict], cfg: RunConfig) -> str:
    """Human table, portfolios as columns, values in % of EAD rounded to 2 decimals."""
    labels = [("k_star_pct", "K*")]
    labels += [(f"{c}_pct", c) for c in REPORT_GA_COLUMNS]
    labels += [(f"rel_{c}_pct", f"rel. {c}") for c in REPORT_GA_COLUMNS]
    labels += [(f"{c}_se_pct", f"{c} s.e.") for c in MC_COLUMNS]
    labels = [(k, lab) for k, lab in labels if any(r.get(k) is not None for r in rows)]
    names = [f"{r['portfolio']} ({r['n_borrowers']})" for r in rows]
    width = max([len(n) for n in names] + [8]) + 2
    lw = max(len(lab) for _, lab in labels) + 2
    out = [f"GA report (% of total EAD), q={cfg.q}, scenarios={cfg.scenarios}, seed={cfg.seed}, nu={cfg.nu}, "
           f"xi={cfg.xi}, rho_mode={cfg.rho_mode}, ELGD={cfg.effective_elgd}, maturity_mode={cfg.maturity_mode}",
           "".ljust(lw) + "".join(n.rjust(width) for n in names)]
    for key, lab in labels:
        cells = ["" if r.get(key) is None else f"{r[key]:.2f}" for r in rows]
        out.append(lab.ljust(lw) + "".join(c.rjust(width) for c in cells))
    return "\n".join(out) + "\n"


def atomic_write(path: str | Path, text: str) -> Path:
    """Write via a temporary file in the same directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_report(rows: list[dict], cfg: RunConfig, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    return [
        atomic_write(out_dir / "report.csv", report_csv_text(rows, cfg)),
        atomic_write(out_dir / "report.txt", report_text(rows, cfg)),
        atomic_write(out_dir / "run_config.txt", "\n".join(cfg.to_lines()) + "\n"),
    ]


def read_report_csv(path: str | Path) -> tuple[dict, list[dict]]:
    """Metadata and rows of a ``report.csv``; numeric cells parsed as floats."""
    meta, body = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("#"):
            k, v = (s.strip() for s in line[1:].split("=", 1))
            meta[k] = v
        else:
            body.append(line)
    rows = []
    for rec in csv.DictReader(body):
        rows.append({k: (v if k == "portfolio" else (None if v == "" else float(v))) for k, v in rec.items()})
    return meta, rows


def _sweep_case(p: Portfolio, cfg: RunConfig, axis: str, value: float) -> tuple[Portfolio, RunConfig]:
    if axis == "rho":
        return p, replace(cfg, rho_mode="fixed", rho_fixed=value)
    if axis == "maturity":
        return p.with_maturity(value), replace(cfg, maturity_mode="file")
    return p.with_coupon(value), cfg


def sweep_target(p: Portfolio, inputs: RunInputs, cfg: RunConfig, target: str):
    """``(value, std_error)`` of one GA estimator for one portfolio; ``std_error`` is None for analytic targets."""
    params = cfg.risk_params()
    tm, curve = inputs.tm, inputs.curve
    if target in ("ga_approx", "ga_simplified"):
        rep = ga_approx(p, tm, params, _ga_maturity(cfg))
        return (rep.ga_full if target == "ga_approx" else rep.ga_simplified), None
    if target == "ga_mc_irb":
        est = ga_mc_actuarial(p, tm, params)
        return est.value, est.std_error
    pm = _mtm_portfolio(p, cfg)
    model = build_mtm_model(pm, tm, curve, params, "default" if target == "ga_mtm_mc_default" else "ratings")
    if target == "ga_mtm_approx":
        return ga_mtm_approx(model), None
    est = ga_mc_mtm(model, params)
    return est.value, est.std_error


def run_sweep(inputs: RunInputs, axis: str, values: Sequence[float], target: str) -> list[dict]:
    """One row per (portfolio, axis value). The seed is shared across values for paired comparisons."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"axis: must be one of {SWEEP_AXES}, got {axis!r}")
    if target not in SWEEP_TARGETS:
        raise ConfigError(f"target: must be one of {SWEEP_TARGETS}, got {target!r}")
    values = [float(v) for v in values]
    if not values:
        raise ConfigError("values: empty sweep axis")
    rows = []
    for name, p in inputs.portfolios.items():
        for v in values:
            pv, cfg = _sweep_case(p, inputs.config, axis, v)
            try:
                ga, se = sweep_target(pv, inputs, cfg, target)
            except ConfigError:
                raise
            except (ValueError, ArithmeticError, RuntimeError) as exc:
                raise PortfolioRunError(f"portfolio {name!r}, {axis}={v}: {exc}") from exc
            rows.append({"portfolio": name, "axis": axis, "value": v, "target": target,
                         "ga_pct": 100.0 * ga, "se_pct": None if se is None else 100.0 * se,
                         "seed": inputs.config.seed})
    return rows


SWEEP_COLUMNS = ("portfolio", "axis", "value", "target", "ga_pct", "se_pct", "seed")


def sweep_csv_text(rows: list[dict], cfg: RunConfig) -> str:
    buf = io.StringIO()
    for line in metadata_lines(cfg):
        buf.write(line + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([_fmt_full(r.get(c)) for c in SWEEP_COLUMNS])
    return buf.getvalue()


def is_finite_row(row: dict) -> bool:
    return all(v is None or not isinstance(v, float) or math.isfinite(v) for v in row.values())
