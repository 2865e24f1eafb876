"""SCAD and Lasso penalties: values, derivatives and proximal maps.

All functions broadcast over numpy arrays so the outer solver can apply
them coordinate-wise without Python loops.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PenaltyKind",
    "PenaltySpec",
    "scad",
    "lasso",
    "penalty_value",
    "penalty_deriv",
    "prox_step",
]


class PenaltyKind(str, enum.Enum):
    SCAD = "scad"
    LASSO = "lasso"


@dataclass(frozen=True)
class PenaltySpec:
    """Penalty ``P_tau`` from the folded-concave family.

    Parameters
    ----------
    kind : PenaltyKind
        ``SCAD`` or ``LASSO``.
    tau : float
        Tuning parameter. ``tau == 0`` switches the penalty off, which is
        how the unpenalized EL problem is expressed.
    scad_a : float
        SCAD concavity constant, must exceed 2 (Fan and Li use 3.7).
    """

    kind: PenaltyKind
    tau: float
    scad_a: float = 3.7

    def __post_init__(self):
        object.__setattr__(self, "kind", PenaltyKind(self.kind))
        if not np.isfinite(self.tau) or self.tau < 0:
            raise ValueError(f"penalty tau must be finite and >= 0, got {self.tau}")
        if self.scad_a <= 2:
            raise ValueError(f"scad_a must exceed 2, got {self.scad_a}")

    def value(self, t):
        return penalty_value(self, t)

    def deriv(self, t):
        return penalty_deriv(self, t)

    def prox(self, v, step):
        return prox_step(self, v, step)


def scad(tau: float, a: float = 3.7) -> PenaltySpec:
    return PenaltySpec(PenaltyKind.SCAD, float(tau), float(a))


def lasso(tau: float) -> PenaltySpec:
    return PenaltySpec(PenaltyKind.LASSO, float(tau))


def _check_nonneg(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("penalty argument must be nonnegative")
    return t


def _unwrap(x: np.ndarray, like):
    return float(x) if np.ndim(like) == 0 else x


def _scad_value(tau: float, a: float, t: np.ndarray) -> np.ndarray:
    mid = (2.0 * a * tau * t - t * t - tau * tau) / (2.0 * (a - 1.0))
    flat = 0.5 * (a + 1.0) * tau * tau
    return np.where(t <= tau, tau * t, np.where(t <= a * tau, mid, flat))


def penalty_value(spec: PenaltySpec, t):
    """Evaluate ``P_tau(t)`` for ``t >= 0``."""
    tt = _check_nonneg(t)
    if spec.kind is PenaltyKind.LASSO:
        out = spec.tau * tt
    else:
        out = _scad_value(spec.tau, spec.scad_a, tt)
    return _unwrap(out, t)


def penalty_deriv(spec: PenaltySpec, t):
    """Derivative ``P'_tau(t)``; at ``t == 0`` the right limit ``tau`` is returned."""
    tt = _check_nonneg(t)
    tau, a = spec.tau, spec.scad_a
    if spec.kind is PenaltyKind.LASSO:
        out = np.full_like(tt, tau)
    else:
        out = np.where(tt <= tau, tau, np.clip((a * tau - tt) / (a - 1.0), 0.0, None))
    return _unwrap(out, t)


def prox_step(spec: PenaltySpec, v, step):
    """Proximal map ``argmin_u (u - v)^2 / (2 step) + P_tau(|u|)``.

    ``step`` may be a scalar or an array broadcastable against ``v``. For
    SCAD the minimizer is taken over the candidates of each of the three
    zones, which stays correct when ``step >= a - 1`` and the prox
    objective is no longer convex. Exact ties go to the smaller magnitude.
    """
    vv = np.asarray(v, dtype=float)
    gam = np.asarray(step, dtype=float)
    if np.any(gam <= 0):
        raise ValueError("prox step must be positive")
    tau = spec.tau
    w = np.abs(vv)
    sgn = np.sign(vv)
    if tau == 0.0:
        return _unwrap(vv.copy(), v)
    if spec.kind is PenaltyKind.LASSO:
        return _unwrap(sgn * np.maximum(w - gam * tau, 0.0), v)

    a = spec.scad_a
    w, gam = np.broadcast_arrays(w, gam)
    sgn = np.broadcast_to(sgn, w.shape)
    c1 = np.clip(w - gam * tau, 0.0, tau)
    denom = (a - 1.0) - gam
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = ((a - 1.0) * w - gam * a * tau) / denom
    # zone-2 objective is convex only when step < a - 1
    c2 = np.where(denom > 0, np.clip(np.nan_to_num(stat), tau, a * tau), tau)
    c3 = np.maximum(w, a * tau)
    # ascending magnitude so argmin's first hit breaks ties toward smaller |u|
    cands = np.stack(
        [np.zeros_like(w), c1, np.full_like(w, tau), c2, np.full_like(w, a * tau), c3]
    )
    order = np.argsort(cands, axis=0, kind="stable")
    cands = np.take_along_axis(cands, order, axis=0)
    obj = (cands - w) ** 2 / (2.0 * gam) + _scad_value(tau, a, cands)
    best = obj.min(axis=0)
    tol = 1e-13 * np.maximum(1.0, np.abs(best))
    pick = np.argmax(obj <= best + tol, axis=0)
    u = np.take_along_axis(cands, pick[None, ...], axis=0)[0]
    return _unwrap(sgn * u, v)
