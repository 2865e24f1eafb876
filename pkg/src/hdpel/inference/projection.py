"""Sparse projection rows: ``min |u|_1  s.t.  |G'u - e_k|_inf <= varsigma``."""

from __future__ import annotations

import logging
from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InfeasibleProjectionError, SolverError
from .simplex import INFEASIBLE, simplex_ub

__all__ = ["ProjectionRows", "default_varsigma", "solve_projection", "min_feasible_varsigma"]

log = logging.getLogger(__name__)

LP_TOL = 1e-7


@dataclass
class ProjectionRows:
    """Rows ``a_k`` (one per target coordinate) and their attained sup-norm residuals."""

    A: np.ndarray
    varsigma: float
    residual_sup: np.ndarray
    targets: np.ndarray
    l1_norms: np.ndarray

    @property
    def m(self) -> int:
        return self.A.shape[0]


def default_varsigma(n: int) -> float:
    return 0.2 * float(n) ** (-1.0 / 3.0)


def _row_program(Gt: np.ndarray, k: int, varsigma: float):
    p, r = Gt.shape
    e = np.zeros(p)
    e[k] = 1.0
    A_ub = np.block([[Gt, -Gt], [-Gt, Gt]])
    b_ub = np.concatenate([varsigma + e, varsigma - e])
    return A_ub, b_ub, e


def min_feasible_varsigma(Gbar, k: int) -> float:
    """Smallest ``varsigma`` for which row ``k`` is feasible: ``min_u |G'u - e_k|_inf``."""
    Gt = np.asarray(Gbar, dtype=float).T
    p, r = Gt.shape
    e = np.zeros(p)
    e[k] = 1.0
    one = np.ones((p, 1))
    # variables (u+, u-, t): G'u - t <= e, -G'u - t <= -e
    A_ub = np.block([[Gt, -Gt, -one], [-Gt, Gt, -one]])
    b_ub = np.concatenate([e, -e])
    c = np.zeros(2 * r + 1)
    c[-1] = 1.0
    res = simplex_ub(c, A_ub, b_ub)
    if not res.success:
        raise SolverError(f"auxiliary LP failed with status {res.status}")
    return float(res.x[-1])


def _solve_row(args):
    Gt, k, varsigma = args
    r = Gt.shape[1]
    A_ub, b_ub, e = _row_program(Gt, k, varsigma)
    res = simplex_ub(np.ones(2 * r), A_ub, b_ub)
    if res.status == INFEASIBLE:
        smin = min_feasible_varsigma(Gt.T, k)
        raise InfeasibleProjectionError(
            f"projection row for coordinate {k} infeasible at varsigma={varsigma:.4g}; minimal feasible value {smin:.6g}",
            min_varsigma=smin,
        )
    if not res.success:
        raise SolverError(f"projection LP for coordinate {k} failed with status {res.status}")
    u = res.x[:r] - res.x[r:]
    return u, float(np.abs(Gt @ u - e).max())


def solve_projection(Gbar, target_indices, varsigma: float, executor: Executor | None = None) -> ProjectionRows:
    """Build one sparse projection row per target coordinate.

    Parameters
    ----------
    Gbar : ndarray, shape (r, p)
        Averaged moment Jacobian at the point estimate.
    target_indices : sequence of int
        Coordinates of ``theta`` to project on; row ``k`` matches the unit
        vector of ``target_indices[k]``.
    varsigma : float
        Sup-norm tolerance, must be positive.
    executor : concurrent.futures.Executor, optional
        Rows are independent programs and may run concurrently.
    """
    if not varsigma > 0:
        raise ConfigurationError(f"varsigma must be positive, got {varsigma}")
    G = np.asarray(Gbar, dtype=float)
    if G.ndim != 2:
        raise ConfigurationError("Gbar must be an (r, p) matrix")
    targets = np.atleast_1d(np.asarray(target_indices, dtype=int))
    if targets.size == 0 or targets.min() < 0 or targets.max() >= G.shape[1]:
        raise ConfigurationError(f"target indices must lie in [0, {G.shape[1]})")
    Gt = np.ascontiguousarray(G.T)
    jobs = [(Gt, int(k), float(varsigma)) for k in targets]
    out = list(executor.map(_solve_row, jobs)) if executor is not None else [_solve_row(j) for j in jobs]
    A = np.vstack([u for u, _ in out])
    resid = np.array([s for _, s in out])
    if np.any(resid > varsigma + LP_TOL):
        log.warning("projection residual exceeds varsigma by %.3g", float(resid.max() - varsigma))
    return ProjectionRows(A=A, varsigma=float(varsigma), residual_sup=resid, targets=targets, l1_norms=np.abs(A).sum(axis=1))
