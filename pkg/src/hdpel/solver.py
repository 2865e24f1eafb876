"""Outer PEL problem: profiled dual plus SCAD, solved by ADAM with a proximal step.

Each outer iteration solves the inner dual at the current ``theta`` (warm
started from the previous multiplier), takes the envelope gradient,
updates the ADAM moments and applies the SCAD proximal map with the
per-coordinate preconditioned step ``lr / (sqrt(v_hat) + eps)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np

from .dual import DualOptions, DualSolution, maximize_dual, model_profile_gradient
from .errors import ConfigurationError, ConvergenceError, HdpelError, SolverError
from .moments import MomentModel, checked_moments
from .penalties import PenaltyKind, PenaltySpec, lasso, penalty_value, prox_step, scad

__all__ = [
    "FitOptions",
    "PelFit",
    "TuningGrid",
    "fit_pel",
    "bic_score",
    "select_tuning",
    "default_grid",
    "penalized_objective",
    "garch11_qmle",
    "bekk_garch_start",
    "perturbed_start",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitOptions:
    """Outer-loop settings.

    ``max_step`` caps the preconditioned proximal step. Without a cap a
    coordinate whose gradient has been exactly zero so far (the profiled
    objective is flat wherever every moment sits inside the ``nu`` band)
    receives the step ``lr / eps`` and is wiped out by the SCAD prox.
    """

    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    tol: float = 1e-6
    max_outer: int = 2000
    max_step: float | None = 1.0
    scad_a: float = 3.7
    dual: DualOptions = field(default_factory=DualOptions)


@dataclass
class PelFit:
    theta: np.ndarray
    active_set: np.ndarray
    dual: DualSolution
    nu: float
    pi: float
    bic: float = math.nan
    bic_degenerate: bool = False
    trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    objective: float = math.nan
    gbar: np.ndarray | None = None


@dataclass(frozen=True)
class TuningGrid:
    nu_values: tuple
    pi_values: tuple

    def __post_init__(self):
        nus = tuple(sorted(float(v) for v in self.nu_values))
        pis = tuple(sorted(float(v) for v in self.pi_values))
        if not nus or not pis:
            raise ConfigurationError("tuning grid must be nonempty")
        if min(nus) < 0 or min(pis) < 0:
            raise ConfigurationError("tuning values must be nonnegative")
        object.__setattr__(self, "nu_values", nus)
        object.__setattr__(self, "pi_values", pis)

    def pairs(self):
        return [(nu, pi) for nu in self.nu_values for pi in self.pi_values]


def default_grid(n: int, r: int, size: int = 8, low: float = 0.01, high: float = 1.0) -> TuningGrid:
    """Log-spaced grid on ``[low, high] * sqrt(log r / n)`` for both tuning values."""
    scale = math.sqrt(math.log(max(r, 2)) / n)
    vals = tuple(np.geomspace(low, high, size) * scale)
    return TuningGrid(vals, vals)


def _as_penalty(p, kind: PenaltyKind, a: float) -> PenaltySpec:
    if isinstance(p, PenaltySpec):
        if p.kind is not kind:
            raise ConfigurationError(f"expected a {kind.value} penalty, got {p.kind.value}")
        return p
    return scad(p, a) if kind is PenaltyKind.SCAD else lasso(p)


def penalized_objective(model: MomentModel, theta, p1, p2, lambda0=None, dual_opts=None):
    """Profiled dual plus SCAD at ``theta``; returns ``(value, DualSolution)``."""
    p1 = _as_penalty(p1, PenaltyKind.SCAD, 3.7)
    g = checked_moments(model, theta)
    sol = maximize_dual(g, p2, lambda0=lambda0, opts=dual_opts)
    return sol.objective + float(np.sum(penalty_value(p1, np.abs(theta)))), sol


def fit_pel(model: MomentModel, p1, p2, theta0, opts: FitOptions | None = None) -> PelFit:
    """Local minimizer of the doubly penalized EL objective.

    Parameters
    ----------
    model : MomentModel
    p1 : PenaltySpec or float
        SCAD penalty on ``theta`` (a bare float is its ``pi``).
    p2 : PenaltySpec or float
        Lasso penalty on the multipliers (a bare float is its ``nu``).
    theta0 : array_like
        Starting point.
    opts : FitOptions, optional

    Raises
    ------
    ConvergenceError
        The inner dual failed or the objective became non-finite; the
        error carries the outer iteration and the last good ``theta``.
    """
    opts = opts or FitOptions()
    p1 = _as_penalty(p1, PenaltyKind.SCAD, opts.scad_a)
    p2 = _as_penalty(p2, PenaltyKind.LASSO, opts.scad_a)
    theta = model.check_theta(theta0).copy()
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lam = None
    trace = []
    converged = False
    k = 0
    for k in range(1, opts.max_outer + 1):
        try:
            g = checked_moments(model, theta)
            sol = maximize_dual(g, p2, lambda0=lam, opts=opts.dual)
        except HdpelError as exc:
            raise ConvergenceError(f"outer iteration {k}: {exc}", iteration=k, last_theta=theta.copy()) from exc
        if not sol.converged:
            raise ConvergenceError(
                f"inner dual did not converge at outer iteration {k} (KKT residual {sol.kkt_residual:.2e})",
                iteration=k,
                last_theta=theta.copy(),
            )
        obj = sol.objective + float(np.sum(penalty_value(p1, np.abs(theta))))
        if not math.isfinite(obj):
            raise ConvergenceError(f"non-finite objective at outer iteration {k}", iteration=k, last_theta=theta.copy())
        trace.append(obj)
        lam = sol.lam
        grad = model_profile_gradient(model, theta, sol)
        m = opts.beta1 * m + (1.0 - opts.beta1) * grad
        v = opts.beta2 * v + (1.0 - opts.beta2) * grad * grad
        mhat = m / (1.0 - opts.beta1**k)
        vhat = v / (1.0 - opts.beta2**k)
        step = opts.lr / (np.sqrt(vhat) + opts.eps)
        if opts.max_step is not None:
            step = np.minimum(step, opts.max_step)
        theta_new = prox_step(p1, theta - step * mhat, step)
        delta = np.max(np.abs(theta_new - theta), initial=0.0)
        theta = theta_new
        if delta <= opts.tol:
            converged = True
            break

    g = checked_moments(model, theta)
    sol = maximize_dual(g, p2, lambda0=lam, opts=opts.dual)
    obj = sol.objective + float(np.sum(penalty_value(p1, np.abs(theta))))
    fit = PelFit(
        theta=theta,
        active_set=np.flatnonzero(theta),
        dual=sol,
        nu=p2.tau,
        pi=p1.tau,
        trace=trace,
        iterations=k,
        converged=converged and sol.converged,
        objective=obj,
        gbar=g.mean(axis=0),
    )
    fit.bic, fit.bic_degenerate = _bic(fit, model.n)
    return fit


def _bic(fit: PelFit, n: int):
    ss = float(fit.gbar @ fit.gbar)
    df = np.count_nonzero(fit.theta) + fit.dual.active_set.size
    if ss == 0.0:
        return -math.inf, True
    return math.log(ss) + math.log(n) / n * df, False


def bic_score(fit: PelFit, model: MomentModel) -> float:
    """``log |gbar(theta_hat)|_2^2 + (log n / n) (df(theta_hat) + df(lam_hat))``.

    Returns ``-inf`` when ``gbar`` vanishes exactly; ``fit.bic_degenerate``
    is set in that case.
    """
    if fit.gbar is None:
        fit.gbar = model.moments(fit.theta).mean(axis=0)
    fit.bic, fit.bic_degenerate = _bic(fit, model.n)
    return fit.bic


def _fit_pair(args):
    model, nu, pi, theta0, opts = args
    try:
        return fit_pel(model, scad(pi, opts.scad_a), lasso(nu), theta0, opts), None
    except HdpelError as exc:
        return None, f"(nu={nu:.4g}, pi={pi:.4g}): {exc}"


def select_tuning(
    model: MomentModel,
    grid: TuningGrid,
    theta0,
    opts: FitOptions | None = None,
    executor: Executor | None = None,
):
    """Fit every ``(nu, pi)`` pair and keep the minimal-BIC fit.

    Ties go to the larger pair (sparser fit). Returns ``(fit, nu, pi, table)``
    where ``table`` lists ``(nu, pi, bic, converged, error)`` per grid point.
    """
    opts = opts or FitOptions()
    pairs = grid.pairs()
    jobs = [(model, nu, pi, theta0, opts) for nu, pi in pairs]
    results = list(executor.map(_fit_pair, jobs)) if executor is not None else [_fit_pair(j) for j in jobs]
    table = []
    best = None
    best_key = None
    for (nu, pi), (fit, err) in zip(pairs, results):
        table.append((nu, pi, fit.bic if fit else math.nan, bool(fit and fit.converged), err))
        if fit is None:
            continue
        key = (fit.bic, -nu, -pi)
        if best_key is None or key < best_key:
            best, best_key = fit, key
    if best is None:
        raise SolverError("every tuning pair failed: " + "; ".join(t[4] for t in table))
    return best, best.nu, best.pi, table


def garch11_qmle(y) -> tuple:
    """Gaussian QMLE of ``s2_t = omega + alpha y_{t-1}^2 + beta s2_{t-1}``.

    Returns ``(omega, alpha, beta)``; the recursion starts at the sample
    variance.
    """
    from scipy.optimize import minimize

    y = np.asarray(y, dtype=float).ravel()
    y2 = y * y
    v0 = float(y2.mean()) if y2.size else 1.0
    v0 = v0 if v0 > 0 else 1.0

    def nll(par):
        omega, alpha, beta = par
        if alpha + beta >= 0.9999:
            return 1e10
        s2 = np.empty_like(y2)
        prev = v0
        for t in range(y2.size):
            s2[t] = prev
            prev = omega + alpha * y2[t] + beta * prev
        return 0.5 * float(np.sum(np.log(s2) + y2 / s2))

    best = None
    for a0, b0 in ((0.05, 0.9), (0.2, 0.6), (0.3, 0.3)):
        x0 = np.array([v0 * (1 - a0 - b0), a0, b0])
        res = minimize(nll, x0, method="L-BFGS-B", bounds=[(1e-8 * v0, 10 * v0), (0.0, 0.999), (0.0, 0.999)])
        if best is None or res.fun < best.fun:
            best = res
    omega, alpha, beta = best.x
    return float(omega), float(alpha), float(beta)


def bekk_garch_start(model, rng: np.random.Generator, offdiag_sd: float = 0.5) -> np.ndarray:
    """BEKK starting point from univariate GARCH(1,1) fits of each series.

    Diagonals of ``C``, ``D`` and ``B`` are the square roots of the fitted
    ``omega``, ``alpha`` and ``beta``; off-diagonal entries are normal draws.
    """
    d = model.d
    y = np.vstack([model.y2[:2], model.y0])
    C = np.tril(rng.normal(0.0, offdiag_sd, (d, d)), -1)
    D = rng.normal(0.0, offdiag_sd, (d, d))
    B = rng.normal(0.0, offdiag_sd, (d, d))
    for i in range(d):
        omega, alpha, beta = garch11_qmle(y[:, i])
        C[i, i], D[i, i], B[i, i] = math.sqrt(omega), math.sqrt(alpha), math.sqrt(beta)
    return model.pack(C, D, B)


def perturbed_start(theta0, rng: np.random.Generator, sd: float = 0.5) -> np.ndarray:
    theta0 = np.asarray(theta0, dtype=float)
    return theta0 + rng.normal(0.0, sd, theta0.shape)
