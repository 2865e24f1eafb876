"""Monte Carlo harness: replicate a design, fit PEL, build projected intervals, aggregate."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, HdpelError
from ..inference.hac import KernelKind, KernelSpec
from ..inference.ppel import PpelOptions, build_report, fit_ppel
from ..inference.projection import solve_projection
from ..moments import BekkMoments, LocalProjectionMoments, VarMoments, sample_moments
from ..solver import FitOptions, TuningGrid, bekk_garch_start, perturbed_start, select_tuning
from .dgp import (
    DgpConfig,
    Family,
    bekk_design,
    gen_lp,
    gen_mgarch,
    gen_shock_series,
    gen_var1,
    lp_true_theta,
    make_rng,
    var_design,
)

__all__ = [
    "DEFAULT_FACTORS",
    "EstimatorSpec",
    "ReplicationRecord",
    "MonteCarloReport",
    "run_replication",
    "run_monte_carlo",
    "aggregate",
    "write_table_csv",
    "write_records_jsonl",
]

log = logging.getLogger(__name__)

DEFAULT_FACTORS = tuple(float(v) for v in np.geomspace(0.01, 1.0, 8))


@dataclass(frozen=True)
class EstimatorSpec:
    """What to run on each replication.

    Tuning values are ``factor * sqrt(log r / n)``. ``start`` is ``"ols"``
    (VAR and local projections), ``"perturbed"`` (truth plus normal noise,
    BEKK simulation mode) or ``"garch"`` (univariate GARCH(1,1) fits).
    ``targets`` are the coordinates for interval estimation; ``None`` picks
    the first nonzero coordinate of the true parameter.
    """

    nu_factors: tuple = DEFAULT_FACTORS
    pi_factors: tuple = DEFAULT_FACTORS
    fit: FitOptions = field(default_factory=FitOptions)
    ppel: PpelOptions = field(default_factory=PpelOptions)
    inference: bool = True
    targets: tuple | None = None
    levels: tuple = (0.9, 0.95, 0.99)
    kernel: KernelKind = KernelKind.PARZEN
    bandwidth_power: float = 0.2
    varsigma_factor: float = 0.2
    start: str = "ols"
    start_sd: float = 0.5
    basis_dim: int = 5

    def __post_init__(self):
        if self.start not in ("ols", "perturbed", "garch"):
            raise ConfigurationError(f"unknown start rule {self.start!r}")
        if not self.nu_factors or not self.pi_factors:
            raise ConfigurationError("tuning factors must be nonempty")
        if any(not 0 < lv < 1 for lv in self.levels):
            raise ConfigurationError("confidence levels must lie in (0, 1)")

    def grid(self, n: int, r: int) -> TuningGrid:
        scale = math.sqrt(math.log(max(r, 2)) / n)
        return TuningGrid(tuple(f * scale for f in self.nu_factors), tuple(f * scale for f in self.pi_factors))


@dataclass
class ReplicationRecord:
    index: int
    theta_hat: np.ndarray | None = None
    comparators: dict = field(default_factory=dict)
    nu: float = math.nan
    pi: float = math.nan
    bic: float = math.nan
    iterations: int = 0
    targets: list = field(default_factory=list)
    theta_tilde: list = field(default_factory=list)
    std_errors: list = field(default_factory=list)
    intervals: dict = field(default_factory=dict)
    error: str | None = None
    inference_error: str | None = None

    def to_json(self) -> dict:
        def num(x):
            return None if x is None or (isinstance(x, float) and not math.isfinite(x)) else x

        return {
            "index": self.index,
            "theta_hat": None if self.theta_hat is None else [float(v) for v in self.theta_hat],
            "comparators": {k: [float(v) for v in val] for k, val in self.comparators.items()},
            "nu": num(float(self.nu)),
            "pi": num(float(self.pi)),
            "bic": num(float(self.bic)),
            "iterations": int(self.iterations),
            "targets": [int(t) for t in self.targets],
            "theta_tilde": [float(v) for v in self.theta_tilde],
            "std_errors": [float(v) for v in self.std_errors],
            "intervals": {f"{lev:g}": [[float(a), float(b)] for a, b in pairs] for lev, pairs in self.intervals.items()},
            "error": self.error,
            "inference_error": self.inference_error,
        }


@dataclass
class MonteCarloReport:
    """Aggregates over successful replications.

    ``mse``, ``bias_sq`` and ``var`` are per method (``"PEL"`` plus
    comparators). ``coverage`` and ``median_ci_length`` map
    ``(coordinate, level)`` to a value, NaN when no interval was produced.
    """

    dgp: DgpConfig
    replications: int
    failures: int
    theta0: np.ndarray
    mse: dict
    bias_sq: dict
    var: dict
    coverage: dict
    median_ci_length: dict
    levels: tuple
    targets: list
    records: list
    inference_failures: int = 0


def _first_nonzero(theta0) -> int:
    nz = np.flatnonzero(theta0)
    if nz.size == 0:
        raise ConfigurationError("true parameter has no nonzero coordinate to target")
    return int(nz[0])


def _design(dgp: DgpConfig, shock_series=None):
    """Replication-invariant pieces: VAR coefficients or the shock path."""
    root = make_rng(dgp.seed)
    if dgp.family is Family.VAR1:
        return var_design(dgp, root)
    if dgp.family is Family.LP:
        if shock_series is not None:
            return np.asarray(shock_series, dtype=float)
        return gen_shock_series(dgp.n, root, dgp.shock_sds, dgp.shock_split)
    return None


def _simulate(dgp: DgpConfig, spec: EstimatorSpec, design, rng):
    """Draw one sample and wrap it in its moment model; returns ``(model, theta0)``."""
    if dgp.family is Family.VAR1:
        data, theta0 = gen_var1(dgp, rng, design=design)
        return VarMoments(data, 1), theta0
    if dgp.family is Family.LP:
        data, theta0 = gen_lp(dgp, design, rng)
        return LocalProjectionMoments(data[:, 0], data[:, 2], data[:, :3], dgp.horizons, dgp.lags), theta0
    data, theta0, flagged = gen_mgarch(dgp, rng)
    if flagged:
        log.warning("conditional covariance needed eigenvalue clipping")
    return BekkMoments(data, min(spec.basis_dim, dgp.dim)), theta0


def run_replication(dgp: DgpConfig, spec: EstimatorSpec, index: int, design=None) -> ReplicationRecord:
    """One replication; solver and data failures are recorded, not raised."""
    rec = ReplicationRecord(index=index)
    rng = make_rng(dgp.seed, index)
    try:
        model, theta0 = _simulate(dgp, spec, design, rng)
        start_rng = make_rng(dgp.seed, index, 1)
        if spec.start == "ols":
            if not hasattr(model, "ols"):
                raise ConfigurationError("OLS start is only defined for VAR and local projections")
            theta_start = model.ols()
        elif spec.start == "perturbed":
            theta_start = perturbed_start(theta0, start_rng, spec.start_sd)
        else:
            theta_start = bekk_garch_start(model, start_rng, spec.start_sd)
        if hasattr(model, "ols"):
            rec.comparators["OLS"] = model.ols()
        fit, nu, pi, _ = select_tuning(model, spec.grid(model.n, model.r), theta_start, spec.fit)
    except HdpelError as exc:
        rec.error = f"{type(exc).__name__}: {exc}"
        return rec
    except np.linalg.LinAlgError as exc:
        rec.error = f"LinAlgError: {exc}"
        return rec
    rec.theta_hat = fit.theta
    rec.nu, rec.pi, rec.bic, rec.iterations = nu, pi, fit.bic, fit.iterations
    if not spec.inference:
        return rec
    targets = list(spec.targets) if spec.targets is not None else [_first_nonzero(theta0)]
    rec.targets = targets
    try:
        n = model.n
        Gbar = sample_moments(model, fit.theta).Gbar
        rows = solve_projection(Gbar, targets, spec.varsigma_factor * n ** (-1.0 / 3.0))
        pf = fit_ppel(model, rows, fit, spec.ppel)
        kernel = KernelSpec(spec.kernel, float(n) ** spec.bandwidth_power)
        report = build_report(model, rows, pf.theta_tilde, fit, kernel, spec.levels, ppel_fit=pf)
    except (HdpelError, np.linalg.LinAlgError) as exc:
        rec.inference_error = f"{type(exc).__name__}: {exc}"
        return rec
    rec.theta_tilde = list(report.theta_tilde)
    rec.std_errors = list(report.std_errors)
    rec.intervals = {lev: list(zip(*report.intervals[lev])) for lev in report.levels}
    return rec


def _job(args):
    return run_replication(*args)


def aggregate(dgp: DgpConfig, theta0, records, levels, targets) -> MonteCarloReport:
    """Combine replication records; the result does not depend on record order."""
    records = sorted(records, key=lambda r: r.index)
    ok = [r for r in records if r.theta_hat is not None]
    theta0 = np.asarray(theta0, dtype=float)
    p = theta0.size
    methods = {"PEL": [r.theta_hat for r in ok]}
    for r in ok:
        for name, est in r.comparators.items():
            methods.setdefault(name, []).append(est)
    mse, bias_sq, var = {}, {}, {}
    for name, ests in methods.items():
        if not ests:
            mse[name] = bias_sq[name] = var[name] = math.nan
            continue
        E = np.vstack(ests)
        mse[name] = float(np.sum((E - theta0) ** 2) / (p * E.shape[0]))
        bias_sq[name] = float(np.sum((E.mean(axis=0) - theta0) ** 2) / p)
        var[name] = mse[name] - bias_sq[name]
    coverage, lengths = {}, {}
    for j, coord in enumerate(targets):
        for lev in levels:
            pairs = [r.intervals[lev][j] for r in ok if r.intervals and lev in r.intervals]
            if not pairs:
                coverage[(coord, lev)] = math.nan
                lengths[(coord, lev)] = math.nan
                continue
            arr = np.asarray(pairs, dtype=float)
            coverage[(coord, lev)] = float(np.mean((arr[:, 0] <= theta0[coord]) & (theta0[coord] <= arr[:, 1])))
            lengths[(coord, lev)] = float(np.median(arr[:, 1] - arr[:, 0]))
    return MonteCarloReport(
        dgp=dgp,
        replications=len(records),
        failures=len(records) - len(ok),
        theta0=theta0,
        mse=mse,
        bias_sq=bias_sq,
        var=var,
        coverage=coverage,
        median_ci_length=lengths,
        levels=tuple(levels),
        targets=list(targets),
        records=records,
        inference_failures=sum(1 for r in ok if r.inference_error is not None),
    )


def run_monte_carlo(
    dgp: DgpConfig,
    spec: EstimatorSpec,
    N: int,
    executor: Executor | None = None,
    shock_series=None,
) -> MonteCarloReport:
    """Run ``N`` independent replications of ``dgp`` through ``spec``.

    Replication ``i`` draws from its own counter-based stream, so results
    are identical whether replications run serially or in a pool.
    """
    if N < 1:
        raise ConfigurationError(f"N must be at least 1, got {N}")
    design = _design(dgp, shock_series)
    jobs = [(dgp, spec, i, design) for i in range(N)]
    if executor is None:
        records = [_job(j) for j in jobs]
    else:
        records = list(executor.map(_job, jobs))
    theta0 = _true_theta(dgp, design)
    targets = list(spec.targets) if spec.targets is not None else [_first_nonzero(theta0)]
    return aggregate(dgp, theta0, records, spec.levels, targets if spec.inference else [])


def _true_theta(dgp: DgpConfig, design):
    if dgp.family is Family.VAR1:
        return np.asarray(design).ravel(order="F")
    if dgp.family is Family.LP:
        return lp_true_theta(dgp.horizons, dgp.lags)
    return BekkMoments.pack(*bekk_design(dgp))


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "NA" if not math.isfinite(v) else format(v, ".17g")


def table_header(levels) -> list:
    cols = ["method", "family", "case", "n", "dim", "replications", "failures", "coordinate", "mse", "bias_sq", "var"]
    cols += [f"coverage_{lev * 100:g}" for lev in levels]
    cols += [f"median_length_{lev * 100:g}" for lev in levels]
    return cols


def table_rows(report: MonteCarloReport) -> list:
    d = report.dgp
    base = [d.family.value, d.case.value, d.n, d.dim, report.replications, report.failures]
    na = [None] * len(report.levels)
    rows = []
    for name in report.mse:
        rows.append([name] + base + [None, report.mse[name], report.bias_sq[name], report.var[name]] + na + na)
    for coord in report.targets:
        cov = [report.coverage[(coord, lev)] for lev in report.levels]
        ln = [report.median_ci_length[(coord, lev)] for lev in report.levels]
        rows.append(["PPEL"] + base + [coord, None, None, None] + cov + ln)
    return rows


def write_table_csv(report: MonteCarloReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(table_header(report.levels))
        for row in table_rows(report):
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def write_records_jsonl(report: MonteCarloReport, path) -> None:
    with open(path, "w") as fh:
        for rec in report.records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")
