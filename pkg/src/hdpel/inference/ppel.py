"""Projected EL re-estimation of a coordinate block and sandwich intervals.

The projected moments ``f_t = A g_t`` have as many components as the
block has coordinates, so the low-dimensional EL problem is exactly
identified. The block estimate is found by minimizing the profiled EL
ratio over a box around the PEL estimate and then polished with Newton
steps on ``mean_t f_t = 0``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.stats import norm

from ..dual import DualOptions, maximize_dual
from ..errors import ConfigurationError, HdpelError, UnboundedDualError
from ..moments import MomentModel, checked_moments
from .hac import KernelKind, KernelSpec, default_bandwidth, hac_covariance
from .projection import ProjectionRows

__all__ = [
    "PpelOptions",
    "PpelFit",
    "InferenceReport",
    "fit_ppel",
    "build_report",
    "psd_sqrt",
    "level_label",
    "write_report_csv",
]

log = logging.getLogger(__name__)

MAX_BLOCK = 10
_UNBOUNDED_PENALTY = 1e6


@dataclass(frozen=True)
class PpelOptions:
    """Settings for the block re-estimation.

    ``box_radius`` overrides ``box_factor * nu`` for the half-width of the
    search box around the PEL estimate.
    """

    box_factor: float = 10.0
    box_radius: float | None = None
    max_iter: int = 200
    newton_polish: int = 20
    dual: DualOptions = field(default_factory=DualOptions)


@dataclass
class PpelFit:
    theta_tilde: np.ndarray
    lambda_tilde: np.ndarray
    theta_full: np.ndarray
    targets: np.ndarray
    box: tuple
    objective: float
    warnings: list = field(default_factory=list)


@dataclass
class InferenceReport:
    targets: np.ndarray
    theta_tilde: np.ndarray
    lambda_tilde: np.ndarray
    Jhat: np.ndarray
    Mhat: np.ndarray
    std_errors: np.ndarray
    tstats: np.ndarray
    intervals: dict
    levels: tuple
    n: int
    varsigma: float
    kernel: KernelSpec
    regularized: bool = False
    warnings: list = field(default_factory=list)
    names: list | None = None

    def rows(self):
        """Table rows in the order ``coordinate, estimate, std_error, tstat, lo/hi per level``."""
        out = []
        for k, idx in enumerate(self.targets):
            row = [int(idx), self.theta_tilde[k], self.std_errors[k], self.tstats[k]]
            for lev in self.levels:
                lo, hi = self.intervals[lev]
                row += [lo[k], hi[k]]
            out.append(row)
        return out

    def header(self):
        cols = ["coordinate", "estimate", "std_error", "tstat"]
        for lev in self.levels:
            tag = level_label(lev)
            cols += [f"lo_{tag}", f"hi_{tag}"]
        return cols


def level_label(level: float) -> str:
    return f"{100.0 * level:g}"


def psd_sqrt(S: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped to zero."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def _projected(model, A, theta):
    return checked_moments(model, theta) @ A.T


def _block_jacobian(model, A, theta, targets):
    """``d mean_t(A g_t) / d theta_M`` as an ``(m, m)`` matrix."""
    n = model.n
    rows = []
    for a in A:
        coef = np.broadcast_to(a / n, (n, a.size))
        rows.append(model.contract(theta, coef)[targets])
    return np.vstack(rows)


def fit_ppel(model: MomentModel, rows: ProjectionRows, theta_hat, opts: PpelOptions | None = None, nu: float | None = None) -> PpelFit:
    """Re-estimate ``theta_M`` from the projected moments ``A g_t``.

    Parameters
    ----------
    model : MomentModel
    rows : ProjectionRows
    theta_hat : PelFit or array_like
        PEL estimate; the nuisance coordinates stay fixed at it.
    opts : PpelOptions, optional
    nu : float, optional
        Multiplier penalty that sets the box width; read from ``theta_hat``
        when it is a fit.
    """
    opts = opts or PpelOptions()
    if hasattr(theta_hat, "theta"):
        nu = theta_hat.nu if nu is None else nu
        theta_hat = theta_hat.theta
    base = model.check_theta(theta_hat).copy()
    targets = np.asarray(rows.targets, dtype=int)
    m = targets.size
    if m > MAX_BLOCK:
        raise ConfigurationError(f"block inference supports at most {MAX_BLOCK} coordinates, got {m}")
    if opts.box_radius is not None:
        radius = float(opts.box_radius)
    elif nu is not None:
        radius = opts.box_factor * float(nu)
    else:
        raise ConfigurationError("box radius needs either opts.box_radius or the multiplier penalty nu")
    if not radius > 0:
        raise ConfigurationError(f"box radius must be positive, got {radius}")
    A = rows.A
    center = base[targets].copy()
    lo, hi = center - radius, center + radius
    warnings = []
    state = {"lam": None, "unbounded": 0}

    def full(x):
        th = base.copy()
        th[targets] = x
        return th

    def profile(x):
        th = full(x)
        F = _projected(model, A, th)
        try:
            sol = maximize_dual(F, 0.0, lambda0=state["lam"], opts=opts.dual)
        except UnboundedDualError:
            # zero outside the hull of the projected moments: steer back with the moment norm
            state["unbounded"] += 1
            fbar = F.mean(axis=0)
            G = _block_jacobian(model, A, th, targets)
            return _UNBOUNDED_PENALTY + 0.5 * float(fbar @ fbar), G.T @ fbar
        state["lam"] = sol.lam
        coef = sol.weights[:, None] * (sol.lam @ A)[None, :]
        return sol.objective, model.contract(th, coef)[targets]

    res = minimize(
        profile,
        center,
        jac=True,
        method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
        options={"maxiter": opts.max_iter, "ftol": 1e-15, "gtol": 1e-12},
    )
    x = np.clip(res.x, lo, hi)
    x = _newton_polish(model, A, full, targets, x, lo, hi, opts.newton_polish)
    th = full(x)
    F = _projected(model, A, th)
    try:
        sol = maximize_dual(F, 0.0, opts=opts.dual)
        lam, obj = sol.lam, sol.objective
        if not sol.converged:
            warnings.append("inner dual did not reach the KKT tolerance at the block estimate")
    except HdpelError as exc:
        lam, obj = np.full(m, np.nan), math.nan
        warnings.append(f"inner dual failed at the block estimate: {exc}")
    on_edge = np.isclose(x, lo, rtol=0, atol=1e-10 * max(1.0, radius)) | np.isclose(x, hi, rtol=0, atol=1e-10 * max(1.0, radius))
    if np.any(on_edge):
        warnings.append(f"block estimate on the search-box boundary for coordinates {targets[on_edge].tolist()}")
    if state["unbounded"]:
        log.debug("projected dual unbounded at %d trial points", state["unbounded"])
    return PpelFit(theta_tilde=x, lambda_tilde=lam, theta_full=th, targets=targets, box=(lo, hi), objective=obj, warnings=warnings)


def _newton_polish(model, A, full, targets, x, lo, hi, steps):
    """Newton steps on ``mean_t f_t(x) = 0`` kept inside the box; stops when no longer improving."""
    fbar = _projected(model, A, full(x)).mean(axis=0)
    cur = float(np.abs(fbar).max())
    for _ in range(steps):
        if cur <= 1e-15:
            break
        G = _block_jacobian(model, A, full(x), targets)
        try:
            step = np.linalg.solve(G, fbar)
        except np.linalg.LinAlgError:
            break
        trial = np.clip(x - step, lo, hi)
        f_trial = _projected(model, A, full(trial)).mean(axis=0)
        new = float(np.abs(f_trial).max())
        if not new < cur:
            break
        x, fbar, cur = trial, f_trial, new
    return x


def _inv_reg(S: np.ndarray, flags: list, name: str):
    S = 0.5 * (S + S.T)
    try:
        if np.linalg.cond(S) < 1e12:
            return np.linalg.inv(S), S
    except np.linalg.LinAlgError:
        pass
    flags.append(name)
    S = S + 1e-10 * np.eye(S.shape[0])
    return np.linalg.pinv(S), S


def build_report(
    model: MomentModel,
    rows: ProjectionRows,
    theta_tilde,
    theta_hat,
    kernel: KernelSpec | None = None,
    levels=(0.9, 0.95, 0.99),
    ppel_fit: PpelFit | None = None,
) -> InferenceReport:
    """Sandwich standard errors and normal intervals for the block estimate.

    ``Gamma`` is the block Jacobian of the averaged projected moments and
    ``V`` their second-moment matrix, both at ``(theta_tilde, theta_hat
    elsewhere)``; ``Xi`` is the kernel long-run covariance. The variance
    of ``theta_tilde`` is ``M^{-1} J M^{-1} / n`` with
    ``J = Gamma' V^{-1} Xi V^{-1} Gamma`` and ``M = Gamma' V^{-1} Gamma``.
    """
    levels = tuple(sorted(float(v) for v in levels))
    if not levels or levels[0] <= 0 or levels[-1] >= 1:
        raise ConfigurationError("confidence levels must lie in (0, 1)")
    if hasattr(theta_hat, "theta"):
        theta_hat = theta_hat.theta
    targets = np.asarray(rows.targets, dtype=int)
    A = rows.A
    n = model.n
    kernel = kernel or KernelSpec(KernelKind.PARZEN, default_bandwidth(n))
    th = model.check_theta(theta_hat).copy()
    tt = np.atleast_1d(np.asarray(theta_tilde, dtype=float))
    th[targets] = tt
    F = _projected(model, A, th)
    V = F.T @ F / n
    Gam = _block_jacobian(model, A, th, targets)
    Xi = hac_covariance(F, kernel)
    flags = []
    Vinv, V = _inv_reg(V, flags, "V")
    L = Gam.T @ Vinv @ psd_sqrt(Xi)
    J = L @ L.T
    R = Gam.T @ psd_sqrt(Vinv)
    M = R @ R.T
    Minv, M = _inv_reg(M, flags, "M")
    cov = Minv @ J @ Minv
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None) / n)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstats = tt / se
    intervals = {}
    for lev in levels:
        zc = norm.ppf(0.5 + 0.5 * lev)
        intervals[lev] = (tt - zc * se, tt + zc * se)
    warnings = list(ppel_fit.warnings) if ppel_fit is not None else []
    if flags:
        warnings.append("regularized " + ", ".join(flags) + " with 1e-10 I")
    names = [model.names[i] for i in targets] if getattr(model, "names", None) else None
    lam = ppel_fit.lambda_tilde if ppel_fit is not None else np.full(targets.size, np.nan)
    return InferenceReport(
        targets=targets,
        theta_tilde=tt,
        lambda_tilde=lam,
        Jhat=0.5 * (J + J.T),
        Mhat=0.5 * (M + M.T),
        std_errors=se,
        tstats=tstats,
        intervals=intervals,
        levels=levels,
        n=n,
        varsigma=rows.varsigma,
        kernel=kernel,
        regularized=bool(flags),
        warnings=warnings,
        names=names,
    )


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_report_csv(report: InferenceReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(report.header())
        for row in report.rows():
            w.writerow([_fmt(v) for v in row])
