"""Command-line front end.

Every subcommand reads one TOML file with a strict schema, writes CSV
artifacts into the output directory and exits with 0 (ok), 2 (bad
configuration), 3 (bad data) or 4 (solver failure). Failures also print
a one-line JSON object on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ConfigurationError, DataError, HdpelError, UndefinedRowError
from .inference.hac import KernelKind, KernelSpec, default_bandwidth
from .inference.ppel import PpelOptions, build_report, fit_ppel, write_report_csv
from .inference.projection import default_varsigma, solve_projection
from .moments import BekkMoments, LocalProjectionMoments, VarMoments, sample_moments
from .simlab.connectedness import variance_decomposition
from .simlab.dgp import Case, DgpConfig, Family, make_rng
from .simlab.montecarlo import DEFAULT_FACTORS, EstimatorSpec, run_monte_carlo, write_records_jsonl, write_table_csv
from .solver import FitOptions, TuningGrid, bekk_garch_start, select_tuning

log = logging.getLogger("hdpel")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_SOLVER = 0, 2, 3, 4
THREADS_ENV = "HDPEL_THREADS"

# allowed keys per section; the value is the accepted python type(s)
_NUM = (int, float)
_LIST = list
_SCHEMA = {
    "": {"seed": int, "threads": int, "out": str},
    "model": {
        "family": str,
        "data": str,
        "columns": _LIST,
        "lag": int,
        "demean": bool,
        "target": (str, int),
        "shock": (str, int),
        "controls": _LIST,
        "horizons": int,
        "lags": int,
        "basis_dim": int,
    },
    "tuning": {
        "nu": _LIST,
        "pi": _LIST,
        "nu_factors": _LIST,
        "pi_factors": _LIST,
        "start": str,
        "start_sd": _NUM,
    },
    "fit": {"lr": _NUM, "tol": _NUM, "max_outer": int, "max_step": _NUM, "scad_a": _NUM},
    "inference": {
        "targets": _LIST,
        "levels": _LIST,
        "kernel": str,
        "bandwidth": _NUM,
        "varsigma": _NUM,
        "box_factor": _NUM,
        "box_radius": _NUM,
        "theta_hat": str,
        "nu": _NUM,
    },
    "dgp": {
        "family": str,
        "case": str,
        "n": int,
        "dim": int,
        "burn_in": int,
        "sparsity": _NUM,
        "snr": _NUM,
        "horizons": int,
        "lags": int,
        "shock_sds": _LIST,
        "shock_split": _NUM,
        "shock_file": str,
        "offdiag_density": _NUM,
        "offdiag_value": _NUM,
        "mask_seed": int,
    },
    "simulate": {
        "reps": int,
        "nu_factors": _LIST,
        "pi_factors": _LIST,
        "start": str,
        "start_sd": _NUM,
        "basis_dim": int,
        "inference": bool,
        "targets": _LIST,
        "levels": _LIST,
        "kernel": str,
        "bandwidth_power": _NUM,
        "varsigma_factor": _NUM,
        "records": bool,
    },
    "decompose": {"g1": str, "sigma": str, "fit_dir": str, "horizons": (int, list)},
}
_SECTIONS = {
    "fit": ("model", "tuning", "fit", "inference"),  # [inference] is read by infer and ignored here
    "infer": ("model", "tuning", "fit", "inference"),
    "simulate": ("dgp", "simulate", "fit"),
    "decompose": ("decompose",),
}


# ---------------------------------------------------------------- config


def load_config(path, command: str) -> dict:
    """Parse and validate a TOML run file; relative paths resolve against its directory."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"cannot parse {path}: {exc}") from None
    return validate_config(raw, command, base=path.parent)


def validate_config(raw: dict, command: str, base=None) -> dict:
    if command not in _SECTIONS:
        raise ConfigurationError(f"unknown subcommand {command!r}")
    allowed = _SECTIONS[command]
    cfg = {"": {}}
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in allowed:
                raise ConfigurationError(f"section [{key}] is not valid for '{command}'; allowed: {', '.join(allowed)}")
            cfg[key] = _check_keys(key, val)
        else:
            cfg[""].update(_check_keys("", {key: val}))
    for sec in allowed:
        cfg.setdefault(sec, {})
    cfg["_base"] = Path(base) if base is not None else Path.cwd()
    return cfg


def _check_keys(section: str, table: dict) -> dict:
    schema = _SCHEMA[section]
    where = f"[{section}]" if section else "top level"
    for key, val in table.items():
        if key not in schema:
            raise ConfigurationError(f"unknown key {key!r} in {where}")
        want = schema[key]
        # bool is an int subclass; only accept it where bool is asked for
        if isinstance(val, bool) and want is not bool:
            raise ConfigurationError(f"key {key!r} in {where} has the wrong type")
        if not isinstance(val, want):
            raise ConfigurationError(f"key {key!r} in {where} has the wrong type")
    return dict(table)


def _resolve(cfg, p) -> Path:
    p = Path(p)
    return p if p.is_absolute() else cfg["_base"] / p


def _levels(values) -> tuple:
    try:
        lv = tuple(sorted(float(v) for v in values))
    except (TypeError, ValueError):
        raise ConfigurationError("levels must be numbers") from None
    if not lv or any(not 0 < v < 1 for v in lv):
        raise ConfigurationError("levels must lie in (0, 1)")
    return lv


def _kernel_kind(name) -> KernelKind:
    try:
        return KernelKind(name)
    except ValueError:
        raise ConfigurationError(f"unknown kernel {name!r}; choose from {[k.value for k in KernelKind]}") from None


def _floats(values, what) -> tuple:
    try:
        out = tuple(float(v) for v in values)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{what} must be a list of numbers") from None
    if not out:
        raise ConfigurationError(f"{what} must be nonempty")
    return out


# ---------------------------------------------------------------- io


def read_table(path):
    """Numeric CSV with an optional header row; returns ``(names, array)``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"input file is empty: {path}")
    names = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    if not rows:
        raise DataError(f"no data rows in {path}")
    width = len(names) if names else len(rows[0])
    if any(len(r) != width for r in rows):
        raise DataError(f"rows of {path} have unequal length")
    try:
        data = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"non-numeric value in {path}: {exc}") from None
    if not np.all(np.isfinite(data)):
        bad = int(np.argmax(~np.all(np.isfinite(data), axis=1)))
        raise DataError(f"non-finite value in {path} at data row {bad}")
    return names or [f"x{j}" for j in range(width)], data


def read_matrix(path) -> np.ndarray:
    _, M = read_table(path)
    return M


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v) + 0.0  # no negative zero
    return format(v, ".17g") if math.isfinite(v) else "NA"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# ---------------------------------------------------------------- models


def _column(names, key):
    if isinstance(key, int):
        if not 0 <= key < len(names):
            raise ConfigurationError(f"column index {key} out of range")
        return key
    if key not in names:
        raise ConfigurationError(f"column {key!r} not in data header {names}")
    return names.index(key)


def build_model(cfg):
    """Moment model from the [model] section."""
    sec = cfg["model"]
    if "family" not in sec or "data" not in sec:
        raise ConfigurationError("[model] needs 'family' and 'data'")
    try:
        family = Family(sec["family"])
    except ValueError:
        raise ConfigurationError(f"unknown model family {sec['family']!r}") from None
    names, data = read_table(_resolve(cfg, sec["data"]))
    cols = [_column(names, c) for c in sec.get("columns", range(len(names)))]
    if family is Family.VAR1:
        _only(sec, family, {"columns", "lag", "demean"})
        return VarMoments(data[:, cols], sec.get("lag", 1), sec.get("demean", False)), family
    if family is Family.LP:
        _only(sec, family, {"target", "shock", "controls", "horizons", "lags"})
        if "target" not in sec or "shock" not in sec:
            raise ConfigurationError("local projection needs 'target' and 'shock' columns")
        ctrl = [_column(names, c) for c in sec.get("controls", [])]
        controls = data[:, ctrl] if ctrl else None
        y, s = data[:, _column(names, sec["target"])], data[:, _column(names, sec["shock"])]
        return LocalProjectionMoments(y, s, controls, sec.get("horizons", 0), sec.get("lags", 1)), family
    _only(sec, family, {"columns", "basis_dim"})
    y = data[:, cols]
    return BekkMoments(y, sec.get("basis_dim", min(5, y.shape[1]))), family


def _only(sec, family, extra):
    bad = set(sec) - {"family", "data"} - extra
    if bad:
        raise ConfigurationError(f"keys {sorted(bad)} do not apply to family {family.value!r}")


def fit_options(cfg) -> FitOptions:
    f = cfg["fit"]
    try:
        return FitOptions(**{k: (int(v) if k == "max_outer" else float(v)) for k, v in f.items()})
    except ValueError as exc:
        raise ConfigurationError(str(exc)) from None


def tuning_grid(cfg, model) -> TuningGrid:
    t = cfg["tuning"]
    scale = math.sqrt(math.log(max(model.r, 2)) / model.n)
    out = []
    for name in ("nu", "pi"):
        if name in t and f"{name}_factors" in t:
            raise ConfigurationError(f"give either '{name}' or '{name}_factors', not both")
        if name in t:
            out.append(_floats(t[name], name))
        else:
            out.append(tuple(f * scale for f in _floats(t.get(f"{name}_factors", DEFAULT_FACTORS), f"{name}_factors")))
    return TuningGrid(*out)


def start_point(cfg, model, family, seed) -> np.ndarray:
    t = cfg["tuning"]
    default = "garch" if family is Family.MGARCH else "ols"
    rule = t.get("start", default)
    if rule == "zero":
        return np.zeros(model.p)
    if rule == "ols":
        if not hasattr(model, "ols"):
            raise ConfigurationError("start = 'ols' is only defined for var1 and lp")
        return model.ols()
    if rule == "garch":
        if family is not Family.MGARCH:
            raise ConfigurationError("start = 'garch' is only defined for mgarch")
        return bekk_garch_start(model, make_rng(seed), float(t.get("start_sd", 0.5)))
    raise ConfigurationError(f"unknown start rule {rule!r}; choose from ols, zero, garch")


# ---------------------------------------------------------------- commands


class Runtime:
    def __init__(self, out: Path, seed: int, threads: int):
        self.out, self.seed, self.threads = out, seed, threads

    def executor(self):
        return ThreadPoolExecutor(self.threads) if self.threads > 1 else None


def _fit(cfg, rt):
    model, family = build_model(cfg)
    grid = tuning_grid(cfg, model)
    theta0 = start_point(cfg, model, family, rt.seed)
    ex = rt.executor()
    try:
        fit, nu, pi, table = select_tuning(model, grid, theta0, fit_options(cfg), ex)
    finally:
        if ex is not None:
            ex.shutdown()
    log.info("selected nu=%.6g pi=%.6g bic=%.6g (%d of %d pairs fitted)", nu, pi, fit.bic, sum(r[4] is None for r in table), len(table))
    return model, family, fit, table


def cmd_fit(cfg, rt) -> int:
    model, family, fit, table = _fit(cfg, rt)
    rt.out.mkdir(parents=True, exist_ok=True)
    names = model.names
    write_csv(
        rt.out / "theta_hat.csv",
        ["coordinate", "name", "value", "active"],
        [[i, names[i], fit.theta[i], fit.theta[i] != 0] for i in range(model.p)],
    )
    lam = fit.dual.lam
    active = np.zeros(model.r, dtype=bool)
    active[fit.dual.active_set] = True
    write_csv(rt.out / "dual.csv", ["moment", "lambda", "active", "gbar"], [[j, lam[j], active[j], fit.gbar[j]] for j in range(model.r)])
    write_csv(
        rt.out / "tuning.csv",
        ["nu", "pi", "bic", "converged", "selected", "error"],
        [[nu, pi, bic, conv, nu == fit.nu and pi == fit.pi, err or ""] for nu, pi, bic, conv, err in table],
    )
    if family is Family.VAR1 and model.lag == 1:
        G = model.coef_matrix(fit.theta)
        e = model.residuals(fit.theta)
        write_csv(rt.out / "g1.csv", None, G)
        write_csv(rt.out / "sigma.csv", None, e.T @ e / model.n)
    log.info("wrote fit artifacts to %s", rt.out)
    return EXIT_OK


def _read_theta(path, p) -> np.ndarray:
    """``value`` column of a theta_hat.csv written by ``fit``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or "value" not in rows[0]:
        raise DataError(f"{path} has no 'value' column")
    try:
        theta = np.array([float(r["value"]) for r in rows])
    except (TypeError, ValueError):
        raise DataError(f"non-numeric estimate in {path}") from None
    if theta.size != p:
        raise DataError(f"{path} has {theta.size} rows, the model has {p} parameters")
    if not np.all(np.isfinite(theta)):
        raise DataError(f"non-finite estimate in {path}")
    return theta


def _targets(spec, model, theta) -> list:
    if spec is None:
        nz = np.flatnonzero(theta)
        if nz.size == 0:
            raise ConfigurationError("no targets given and the estimate has no nonzero coordinate")
        return [int(nz[0])]
    out = []
    for t in spec:
        if isinstance(t, str):
            if t not in model.names:
                raise ConfigurationError(f"unknown target coordinate {t!r}")
            out.append(model.names.index(t))
        elif isinstance(t, int) and not isinstance(t, bool) and 0 <= t < model.p:
            out.append(t)
        else:
            raise ConfigurationError(f"target {t!r} is not a coordinate index in [0, {model.p})")
    if not out or len(set(out)) != len(out):
        raise ConfigurationError("targets must be nonempty and distinct")
    return out


def cmd_infer(cfg, rt) -> int:
    inf = cfg["inference"]
    levels = _levels(inf.get("levels", (0.9, 0.95, 0.99)))
    kind = _kernel_kind(inf.get("kernel", "parzen"))
    if "theta_hat" in inf:
        model, _ = build_model(cfg)
        theta = _read_theta(_resolve(cfg, inf["theta_hat"]), model.p)
        nu = inf.get("nu")
        if nu is None and "box_radius" not in inf:
            raise ConfigurationError("with 'theta_hat' give 'nu' or 'box_radius'")
    else:
        model, _, fit, _ = _fit(cfg, rt)
        theta, nu = fit.theta, fit.nu
    n = model.n
    targets = _targets(inf.get("targets"), model, theta)
    if "varsigma" in inf:
        varsigma = float(inf["varsigma"])
        log.info("varsigma = %.6g (configured)", varsigma)
    else:
        varsigma = default_varsigma(n)
        log.info("varsigma = 0.2 n^(-1/3) = %.6g with n = %d", varsigma, n)
    if "bandwidth" in inf:
        h = float(inf["bandwidth"])
        log.info("bandwidth h_n = %.6g (configured)", h)
    else:
        h = default_bandwidth(n)
        log.info("bandwidth h_n = n^(1/5) = %.6g with n = %d", h, n)
    kernel = KernelSpec(kind, h)
    opts = PpelOptions(
        box_factor=float(inf.get("box_factor", 10.0)),
        box_radius=float(inf["box_radius"]) if "box_radius" in inf else None,
        dual=fit_options(cfg).dual,
    )
    Gbar = sample_moments(model, theta).Gbar
    ex = rt.executor()
    try:
        rows = solve_projection(Gbar, targets, varsigma, ex)
    finally:
        if ex is not None:
            ex.shutdown()
    pf = fit_ppel(model, rows, theta, opts, nu=nu)
    report = build_report(model, rows, pf.theta_tilde, theta, kernel, levels, ppel_fit=pf)
    for w in report.warnings:
        log.warning(w)
    rt.out.mkdir(parents=True, exist_ok=True)
    write_report_csv(report, rt.out / "inference.csv")
    log.info("wrote %s", rt.out / "inference.csv")
    return EXIT_OK


def dgp_config(cfg, seed) -> DgpConfig:
    d = dict(cfg["dgp"])
    d.pop("shock_file", None)
    for key in ("family", "n", "dim"):
        if key not in d:
            raise ConfigurationError(f"[dgp] needs {key!r}")
    try:
        d["family"] = Family(d["family"])
    except ValueError:
        raise ConfigurationError(f"unknown family {d['family']!r}") from None
    try:
        d["case"] = Case(d.get("case", "I"))
    except ValueError:
        raise ConfigurationError(f"invalid case label {d.get('case')!r}; choose I or II") from None
    if "shock_sds" in d:
        d["shock_sds"] = _floats(d["shock_sds"], "shock_sds")
    return DgpConfig(seed=seed, **d)


def estimator_spec(cfg, dgp) -> EstimatorSpec:
    s = cfg["simulate"]
    default_start = "perturbed" if dgp.family is Family.MGARCH else "ols"
    targets = s.get("targets")
    if targets is not None and not all(isinstance(t, int) and not isinstance(t, bool) for t in targets):
        raise ConfigurationError("simulate targets must be coordinate indices")
    return EstimatorSpec(
        nu_factors=_floats(s.get("nu_factors", DEFAULT_FACTORS), "nu_factors"),
        pi_factors=_floats(s.get("pi_factors", DEFAULT_FACTORS), "pi_factors"),
        fit=fit_options(cfg),
        inference=s.get("inference", True),
        targets=tuple(targets) if targets is not None else None,
        levels=_levels(s.get("levels", (0.9, 0.95, 0.99))),
        kernel=_kernel_kind(s.get("kernel", "parzen")),
        bandwidth_power=float(s.get("bandwidth_power", 0.2)),
        varsigma_factor=float(s.get("varsigma_factor", 0.2)),
        start=s.get("start", default_start),
        start_sd=float(s.get("start_sd", 0.5)),
        basis_dim=int(s.get("basis_dim", 5)),
    )


def cmd_simulate(cfg, rt) -> int:
    dgp = dgp_config(cfg, rt.seed)
    spec = estimator_spec(cfg, dgp)
    reps = cfg["simulate"].get("reps")
    if reps is None or reps < 1:
        raise ConfigurationError("[simulate] needs 'reps' >= 1")
    shock = None
    if "shock_file" in cfg["dgp"]:
        if dgp.family is not Family.LP:
            raise ConfigurationError("shock_file applies to the lp family only")
        _, tab = read_table(_resolve(cfg, cfg["dgp"]["shock_file"]))
        shock = tab[:, -1]
    ex = rt.executor()
    try:
        report = run_monte_carlo(dgp, spec, reps, executor=ex, shock_series=shock)
    finally:
        if ex is not None:
            ex.shutdown()
    log.info("%d replications, %d failed, %d inference failures", report.replications, report.failures, report.inference_failures)
    rt.out.mkdir(parents=True, exist_ok=True)
    write_table_csv(report, rt.out / "simulate.csv")
    if cfg["simulate"].get("records", True):
        write_records_jsonl(report, rt.out / "records.jsonl")
    log.info("wrote simulation table to %s", rt.out)
    return EXIT_OK


def cmd_decompose(cfg, rt) -> int:
    sec = cfg["decompose"]
    if "fit_dir" in sec:
        if "g1" in sec or "sigma" in sec:
            raise ConfigurationError("give either 'fit_dir' or 'g1' and 'sigma'")
        base = _resolve(cfg, sec["fit_dir"])
        g1_path, sigma_path = base / "g1.csv", base / "sigma.csv"
    else:
        if "g1" not in sec or "sigma" not in sec:
            raise ConfigurationError("[decompose] needs 'fit_dir' or both 'g1' and 'sigma'")
        g1_path, sigma_path = _resolve(cfg, sec["g1"]), _resolve(cfg, sec["sigma"])
    hz = sec.get("horizons", 10)
    if isinstance(hz, list):
        if not hz or not all(isinstance(h, int) and not isinstance(h, bool) and h >= 1 for h in hz):
            raise ConfigurationError("horizons must be positive integers")
        hz = sorted(set(hz))
    elif hz < 1:
        raise ConfigurationError("horizons must be positive")
    G, S = read_matrix(g1_path), read_matrix(sigma_path)
    try:
        out = variance_decomposition(G, S, hz)
    except ConfigurationError as exc:
        raise DataError(str(exc)) from None
    rt.out.mkdir(parents=True, exist_ok=True)
    d = G.shape[0]
    for h, (D, _) in out.items():
        write_csv(rt.out / f"dtilde_{h}.csv", None, D)
    write_csv(rt.out / "outdegree.csv", ["horizon"] + [f"col{j}" for j in range(d)], [[h] + list(c) for h, (_, c) in out.items()])
    log.info("wrote %d horizon matrices to %s", len(out), rt.out)
    return EXIT_OK


_COMMANDS = {"fit": cmd_fit, "infer": cmd_infer, "simulate": cmd_simulate, "decompose": cmd_decompose}


# ---------------------------------------------------------------- entry point


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output directory (default: config value or current directory)")
    common.add_argument("--seed", type=int, help="master seed (default: config value or 0)")
    common.add_argument("--threads", type=int, help=f"worker threads; {THREADS_ENV} is used when absent")
    common.add_argument("-q", "--quiet", action="store_true", help="only log warnings")
    p = argparse.ArgumentParser(prog="hdpel", description="Doubly penalized empirical likelihood for time series moment models.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("fit", "infer", "decompose"):
        sp = sub.add_parser(name, parents=[common], help=f"run '{name}' from a TOML config")
        sp.add_argument("config", help="TOML run file")
    sp = sub.add_parser("simulate", parents=[common], help="Monte Carlo study")
    sp.add_argument("family", nargs="?", help="var1, lp or mgarch (overrides the config)")
    sp.add_argument("-c", "--config", help="TOML run file")
    sp.add_argument("--case", help="design case, I or II")
    sp.add_argument("--n", type=int, help="sample size")
    sp.add_argument("--d", type=int, dest="dim", help="dimension")
    sp.add_argument("--reps", type=int, help="number of replications")
    return p


def _error_json(exc: BaseException, code: int) -> str:
    out = {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
    for attr in ("spectral_radius", "min_varsigma", "row", "t", "iteration"):
        if getattr(exc, attr, None) is not None:
            out[attr] = getattr(exc, attr)
    return json.dumps(out, sort_keys=True)


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, ConfigurationError):
        return EXIT_CONFIG
    if isinstance(exc, (DataError, UndefinedRowError)):
        return EXIT_DATA
    return EXIT_SOLVER


def _threads(flag, cfg) -> int:
    if flag is not None:
        val = flag
    elif os.environ.get(THREADS_ENV):
        try:
            val = int(os.environ[THREADS_ENV])
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer") from None
    else:
        val = cfg[""].get("threads", 1)
    if val < 1:
        raise ConfigurationError("thread count must be at least 1")
    return val


def _simulate_config(args) -> dict:
    raw = {}
    base = None
    if args.config:
        path = Path(args.config)
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigurationError(f"config file not found: {path}") from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from None
        base = path.parent
    dgp = raw.setdefault("dgp", {})
    if not isinstance(dgp, dict):
        raise ConfigurationError("[dgp] must be a table")
    for key, val in (("family", args.family), ("case", args.case), ("n", args.n), ("dim", args.dim)):
        if val is not None:
            dgp[key] = val
    if args.reps is not None:
        sim = raw.setdefault("simulate", {})
        if not isinstance(sim, dict):
            raise ConfigurationError("[simulate] must be a table")
        sim["reps"] = args.reps
    return validate_config(raw, "simulate", base)


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = _simulate_config(args) if args.command == "simulate" else load_config(args.config, args.command)
        top = cfg[""]
        seed = args.seed if args.seed is not None else top.get("seed", 0)
        if seed < 0:
            raise ConfigurationError("seed must be nonnegative")
        out = Path(args.out) if args.out else (_resolve(cfg, top["out"]) if "out" in top else Path.cwd())
        rt = Runtime(out, seed, _threads(args.threads, cfg))
        return _COMMANDS[args.command](cfg, rt)
    except (HdpelError, np.linalg.LinAlgError) as exc:
        code = exit_code(exc)
        print(_error_json(exc, code), file=sys.stderr)
        return code
    except OSError as exc:
        print(_error_json(DataError(f"{exc.strerror}: {exc.filename}"), EXIT_DATA), file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
