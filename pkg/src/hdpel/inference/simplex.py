"""Dense two-phase primal simplex with a Bland's-rule anti-cycling fallback.

Solves ``min c'x  s.t.  A_ub x <= b_ub,  x >= 0``. Sized for the small
projection programs of the inference layer, where the tableau has a few
hundred rows at most.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["LpResult", "simplex_ub"]

OPTIMAL, INFEASIBLE, UNBOUNDED, ITERATION_LIMIT = 0, 2, 3, 1


@dataclass
class LpResult:
    x: np.ndarray
    fun: float
    status: int
    pivots: int

    @property
    def success(self) -> bool:
        return self.status == OPTIMAL


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    colv = T[:, col].copy()
    colv[row] = 0.0
    T -= np.outer(colv, T[row])
    basis[row] = col


def _run(T, basis, ncols, tol, max_pivots, pivots, stall_limit=50):
    """Pivot tableau ``T`` (last row = reduced costs, last column = rhs) to optimality.

    Entering columns follow the most negative reduced cost; after
    ``stall_limit`` consecutive degenerate pivots Bland's rule takes over
    until the objective moves again, which rules out cycling.
    """
    m = T.shape[0] - 1
    stall = 0
    while True:
        red = T[-1, :ncols]
        cand = np.flatnonzero(red < -tol)
        if cand.size == 0:
            return OPTIMAL, pivots
        if pivots >= max_pivots:
            return ITERATION_LIMIT, pivots
        bland = stall >= stall_limit
        col = int(cand[0]) if bland else int(cand[np.argmin(red[cand])])
        colv = T[:m, col]
        pos = colv > tol
        if not np.any(pos):
            return UNBOUNDED, pivots
        ratios = np.full(m, np.inf)
        ratios[pos] = T[:m, -1][pos] / colv[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        row = int(ties[np.argmin(basis[ties])])
        stall = stall + 1 if best <= tol else 0
        _pivot(T, basis, row, col)
        pivots += 1


def simplex_ub(c, A_ub, b_ub, tol: float = 1e-10, max_pivots: int = 50000) -> LpResult:
    """Minimize ``c'x`` over ``{x >= 0 : A_ub x <= b_ub}``."""
    c = np.asarray(c, dtype=float)
    A = np.asarray(A_ub, dtype=float)
    b = np.asarray(b_ub, dtype=float)
    m, nx = A.shape
    flip = b < 0
    sgn = np.where(flip, -1.0, 1.0)
    nart = int(flip.sum())
    ncols = nx + m + nart
    T = np.zeros((m + 1, ncols + 1))
    T[:m, :nx] = A * sgn[:, None]
    T[:m, nx : nx + m] = np.diag(sgn)
    art_rows = np.flatnonzero(flip)
    T[art_rows, nx + m + np.arange(nart)] = 1.0
    T[:m, -1] = b * sgn
    basis = np.where(flip, 0, nx + np.arange(m))
    basis[art_rows] = nx + m + np.arange(nart)

    pivots = 0
    if nart:
        # phase one: minimize the sum of artificials
        T[-1, :] = 0.0
        T[-1, nx + m :ncols] = 1.0
        T[-1] -= T[art_rows].sum(axis=0)
        status, pivots = _run(T, basis, ncols, tol, max_pivots, pivots)
        if status == ITERATION_LIMIT:
            return LpResult(np.full(nx, np.nan), np.nan, status, pivots)
        if -T[-1, -1] > tol * max(1.0, np.abs(b).max()) * 10:
            return LpResult(np.full(nx, np.nan), np.nan, INFEASIBLE, pivots)
        # push remaining artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= nx + m:
                nz = np.flatnonzero(np.abs(T[i, : nx + m]) > tol)
                if nz.size:
                    _pivot(T, basis, i, int(nz[0]))
                else:
                    keep[i] = False
        rows = np.concatenate([np.flatnonzero(keep), [m]])
        T = np.delete(T[rows], np.s_[nx + m : ncols], axis=1)
        basis = basis[keep]
        m = basis.size
        ncols = nx + A.shape[0]

    T[-1, :] = 0.0
    T[-1, :nx] = c
    for i in range(m):
        if T[-1, basis[i]] != 0.0:
            T[-1] -= T[-1, basis[i]] * T[i]
    status, pivots = _run(T, basis, ncols, tol, max_pivots, pivots)
    x = np.zeros(ncols)
    x[basis] = T[:m, -1]
    x = np.maximum(x[:nx], 0.0)
    if status != OPTIMAL:
        return LpResult(x, np.nan, status, pivots)
    return LpResult(x, float(c @ x), OPTIMAL, pivots)
