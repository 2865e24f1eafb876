"""Inner problem: the L1-penalized empirical likelihood dual.

Maximizes ``f(lam) = n^-1 sum_t log(1 + lam' g_t) - nu |lam|_1`` over the
region ``1 + lam' g_t >= floor`` (``floor = 1/n`` by default).

Two routes are provided. The interior-point route splits
``lam = lam_plus - lam_minus`` and follows a log-barrier path with damped
Newton steps; it needs no starting point. The active-set route runs Newton
on the current support with sign constraints and is what makes warm
starts cheap inside the outer loop. The interior-point result is always
polished by the active-set route so reported multipliers have exact
zeros off the support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import linprog

from .errors import ConfigurationError, NumericalEvaluationError, UnboundedDualError
from .penalties import PenaltyKind, PenaltySpec

__all__ = [
    "DualOptions",
    "DualSolution",
    "maximize_dual",
    "kkt_eta",
    "kkt_residual",
    "dual_objective",
    "profile_gradient",
    "model_profile_gradient",
]


@dataclass(frozen=True)
class DualOptions:
    kkt_tol: float = 1e-8
    max_newton: int = 200
    mu_factor: float = 0.2
    mu_final: float = 1e-10
    active_tol: float = 1e-8
    ridge: float = 1e-10
    floor: float | None = None
    method: str = "auto"  # "auto", "interior-point" or "active-set"


@dataclass
class DualSolution:
    """Maximizer of the penalized dual at a fixed ``theta``.

    ``lam`` is the multiplier vector, ``weights`` the implied EL
    probabilities ``1 / (n (1 + lam' g_t))`` and ``eta`` the KKT vector.
    """

    lam: np.ndarray
    active_set: np.ndarray
    objective: float
    weights: np.ndarray
    eta: np.ndarray
    kkt_residual: float
    iterations: int
    converged: bool
    nu: float
    method: str = ""
    denom: np.ndarray = field(repr=False, default=None)


def _nu_of(penalty2) -> float:
    if isinstance(penalty2, PenaltySpec):
        if penalty2.kind is not PenaltyKind.LASSO:
            raise ConfigurationError("the multiplier penalty must be Lasso")
        return penalty2.tau
    nu = float(penalty2)
    if not math.isfinite(nu) or nu < 0:
        raise ConfigurationError(f"nu must be finite and >= 0, got {nu}")
    return nu


def dual_objective(g: np.ndarray, lam: np.ndarray, nu: float) -> float:
    z = 1.0 + g @ lam
    if np.any(z <= 0):
        return -np.inf
    return float(np.mean(np.log(z)) - nu * np.abs(lam).sum())


def kkt_eta(g: np.ndarray, lam: np.ndarray, active_tol: float = 1e-8) -> np.ndarray:
    """``eta_j = n^-1 sum_t g_tj / (1 + lam_R' g_tR)`` over the support ``R`` of ``lam``."""
    g = np.asarray(g, dtype=float)
    lam = np.where(np.abs(lam) > active_tol, lam, 0.0)
    z = 1.0 + g @ lam
    return (g / z[:, None]).mean(axis=0)


def kkt_residual(eta: np.ndarray, lam: np.ndarray, nu: float, active_tol: float = 1e-8) -> float:
    act = np.abs(lam) > active_tol
    res_act = np.abs(eta[act] - nu * np.sign(lam[act]))
    res_in = np.maximum(np.abs(eta[~act]) - nu, 0.0)
    return float(max(res_act.max(initial=0.0), res_in.max(initial=0.0)))


def _solve_spd(H: np.ndarray, b: np.ndarray, ridge: float) -> np.ndarray:
    try:
        return cho_solve(cho_factor(H, check_finite=False), b, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    scale = max(1.0, float(np.abs(np.diag(H)).max(initial=0.0)))
    H = H + ridge * scale * np.eye(H.shape[0])
    try:
        return cho_solve(cho_factor(H, check_finite=False), b, check_finite=False)
    except np.linalg.LinAlgError:
        return np.linalg.lstsq(H, b, rcond=None)[0]


def _active_set(g, nu, lam, floor, opts, budget):
    """Sign-constrained Newton on the support; returns (lam, iterations, ok)."""
    n, r = g.shape
    tol = opts.kkt_tol
    lam = np.where(np.abs(lam) > opts.active_tol, lam, 0.0)
    S = np.flatnonzero(lam)
    sgn = np.zeros(r)
    sgn[S] = np.sign(lam[S])
    z = 1.0 + g @ lam
    if np.any(z <= floor):
        return lam, 0, False
    it = 0
    polished = False
    f_cur = np.mean(np.log(z)) - nu * np.abs(lam).sum()
    while it < budget:
        w = 1.0 / z
        eta = w @ g / n
        grad_S = eta[S] - nu * sgn[S]
        res_act = np.abs(grad_S).max(initial=0.0)
        viol = np.abs(eta) - nu
        viol[S] = -np.inf
        if res_act <= tol:
            if viol.max(initial=-np.inf) <= tol:
                # one extra Newton step pins lam well below the KKT tolerance
                if polished or res_act <= 1e-13 or S.size == 0:
                    return lam, it, True
                polished = True
            else:
                if nu == 0.0:
                    add = np.flatnonzero(viol > tol)
                else:
                    add = np.flatnonzero(viol > max(tol, 0.1 * viol.max()))
                sgn[add] = np.sign(eta[add])
                S = np.sort(np.concatenate([S, add]))
                continue
        it += 1
        while True:
            gS = g[:, S]
            gw = gS * w[:, None]
            H = gw.T @ gw / n
            d = _solve_spd(H, grad_S, opts.ridge)
            # a coordinate sitting at zero may not leave against its sign
            stuck = (lam[S] == 0.0) & (sgn[S] * d < 0) if nu > 0 else np.zeros(S.size, bool)
            if not np.any(stuck):
                break
            sgn[S[stuck]] = 0.0
            S = S[~stuck]
            grad_S = eta[S] - nu * sgn[S]
        if S.size == 0:
            continue
        dg = gS @ d
        # longest step keeping every active coordinate on its sign
        shrink = sgn[S] * d < 0
        a_zero = np.inf
        hit = None
        if nu > 0 and np.any(shrink):
            ratios = np.abs(lam[S][shrink]) / np.abs(d[shrink])
            a_zero = ratios.min()
            hit = S[shrink][ratios <= a_zero * (1 + 1e-12)]
        neg = dg < 0
        a_feas = np.inf
        if np.any(neg):
            a_feas = 0.99 * ((z[neg] - floor) / -dg[neg]).min()
        slope = grad_S @ d
        if hit is not None:
            # backtrack along the projection arc: coordinates crossing zero are clipped to it
            lamS = lam[S]
            alpha = min(1.0, a_feas)
            done = False
            while alpha > a_zero:
                trial = lamS + alpha * d
                trial[sgn[S] * trial < 0] = 0.0
                lam_new = lam.copy()
                lam_new[S] = trial
                z_new = 1.0 + g @ lam_new
                if np.all(z_new > floor):
                    f_new = np.mean(np.log(z_new)) - nu * np.abs(lam_new).sum()
                    if f_new >= f_cur + 1e-4 * (grad_S @ (trial - lamS)):
                        done = True
                        break
                alpha *= 0.5
            if done:
                lam, z, f_cur = lam_new, z_new, f_new
                keep = lam[S] != 0.0
                sgn[S[~keep]] = 0.0
                S = S[keep]
                continue
        alpha = min(1.0, a_zero, a_feas)
        accepted = False
        for _ in range(60):
            lam_new = lam.copy()
            lam_new[S] = lam[S] + alpha * d
            z_new = z + alpha * dg
            if np.all(z_new > floor):
                f_new = np.mean(np.log(z_new)) - nu * (np.abs(lam_new).sum())
                if alpha == a_zero and hit is not None:
                    lam_new[hit] = 0.0
                    z_new = 1.0 + g @ lam_new
                    f_new = np.mean(np.log(z_new)) - nu * np.abs(lam_new).sum()
                if f_new >= f_cur + 1e-4 * alpha * slope - 1e-15 * abs(f_cur):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            return lam, it, polished
        if np.linalg.norm(lam_new) > 1e10:
            raise UnboundedDualError("dual multipliers diverge; the unpenalized dual has no finite maximizer")
        lam, z, f_cur = lam_new, z_new, f_new
        if alpha == a_zero and hit is not None:
            keep = lam[S] != 0.0
            sgn[S[~keep]] = 0.0
            S = S[keep]
    return lam, it, False


def _interior_point(g, nu, floor, opts):
    """Log-barrier path on the split variables; returns (lam, iterations)."""
    n, r = g.shape
    mu = max(nu, 1e-12)
    mu_end = opts.mu_final * mu
    lp = np.ones(r)
    lm = np.ones(r)
    it = 0
    while True:
        for _ in range(50):
            lam = lp - lm
            z = 1.0 + g @ lam
            s = z - floor
            w = 1.0 / z
            ws = 1.0 / s
            gam = (g * (w + mu * ws)[:, None]).mean(axis=0)
            gp = gam - nu + mu / lp
            gm = -gam - nu + mu / lm
            gw = g * np.sqrt(w * w + mu * ws * ws)[:, None]
            Qn = gw.T @ gw / n  # minus the Hessian of the smooth part
            P = mu / lp**2
            M = mu / lm**2
            A = Qn + np.diag(P * M / (P + M))
            rhs = gp - P * (gp + gm) / (P + M)
            dlam = _solve_spd(A, rhs, opts.ridge)
            dp = (gp + gm + M * dlam) / (P + M)
            dm = dp - dlam
            dec = float(gp @ dp + gm @ dm)
            # rough centering suffices until the last round; the polish does the rest
            if dec <= (1e-14 if mu <= mu_end else 0.1 * mu):
                break
            it += 1
            if it >= opts.max_newton:
                return lp - lm, it
            dg = g @ dlam
            alpha = 1.0
            for vec, dv in ((lp, dp), (lm, dm)):
                neg = dv < 0
                if np.any(neg):
                    alpha = min(alpha, 0.99 * (vec[neg] / -dv[neg]).min())
            neg = dg < 0
            if np.any(neg):
                alpha = min(alpha, 0.99 * (s[neg] / -dg[neg]).min())

            def phi(a):
                zz = z + a * dg
                lpp = lp + a * dp
                lmm = lm + a * dm
                return (
                    np.mean(np.log(zz))
                    + mu * np.mean(np.log(zz - floor))
                    - nu * (lpp.sum() + lmm.sum())
                    + mu * (np.log(lpp).sum() + np.log(lmm).sum())
                )

            f0 = phi(0.0)
            while alpha > 1e-14 and not phi(alpha) >= f0 + 1e-4 * alpha * dec:
                alpha *= 0.5
            lp = lp + alpha * dp
            lm = lm + alpha * dm
        if mu <= mu_end:
            return lp - lm, it
        mu *= opts.mu_factor


def _hull_interior(g: np.ndarray) -> bool:
    """True when some strictly positive weights average ``g`` to zero.

    Solves ``max s`` over ``w`` with ``g'w = 0``, ``sum w = 1`` and
    ``w_t >= s``; the unpenalized dual is bounded exactly when ``s > 0``.
    """
    n, r = g.shape
    c = np.zeros(n + 1)
    c[-1] = -1.0
    A_ub = np.hstack([-np.eye(n), np.ones((n, 1))])
    A_eq = np.vstack([np.hstack([g.T, np.zeros((r, 1))]), np.r_[np.ones(n), 0.0]])
    b_eq = np.r_[np.zeros(r), 1.0]
    bounds = [(0, None)] * n + [(None, 1.0)]
    res = linprog(c, A_ub=A_ub, b_ub=np.zeros(n), A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    return res.status == 0 and -res.fun > 1e-12


def _finish(g, lam, nu, floor, it, method, opts) -> DualSolution:
    n = g.shape[0]
    lam = np.where(np.abs(lam) > opts.active_tol, lam, 0.0)
    z = 1.0 + g @ lam
    eta = (g / z[:, None]).mean(axis=0)
    res = kkt_residual(eta, lam, nu, opts.active_tol)
    return DualSolution(
        lam=lam,
        active_set=np.flatnonzero(lam),
        objective=float(np.mean(np.log(z)) - nu * np.abs(lam).sum()),
        weights=1.0 / (n * z),
        eta=eta,
        kkt_residual=res,
        iterations=it,
        converged=bool(res <= opts.kkt_tol and np.all(z >= floor)),
        nu=nu,
        method=method,
        denom=z,
    )


def maximize_dual(g, penalty2=0.0, lambda0=None, opts: DualOptions | None = None) -> DualSolution:
    """Maximize the penalized EL dual for the moment values ``g`` (shape ``(n, r)``).

    Parameters
    ----------
    g : array_like
        Moment values ``g_t(theta)``, one row per observation.
    penalty2 : PenaltySpec or float
        Lasso penalty on the multipliers, or its ``nu`` directly. ``nu = 0``
        gives the classical EL dual.
    lambda0 : array_like, optional
        Warm start. With ``method="auto"`` a warm start goes straight to the
        active-set route and falls back to the interior-point path on failure.
    opts : DualOptions, optional

    Returns
    -------
    DualSolution
        ``converged`` is False, never an exception, when the iteration cap
        is reached first.
    """
    opts = opts or DualOptions()
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        g = g[:, None]
    if not np.all(np.isfinite(g)):
        bad = int(np.argmax(~np.all(np.isfinite(g), axis=1)))
        raise NumericalEvaluationError(f"non-finite moment value at t={bad}", t=bad)
    n, r = g.shape
    if n < 2:
        raise ConfigurationError("the dual needs at least two observations")
    nu = _nu_of(penalty2)
    floor = 1.0 / n if opts.floor is None else opts.floor
    if nu == 0.0 and np.any(np.all(g == 0.0, axis=0)):
        raise UnboundedDualError("an all-zero moment column leaves its multiplier undetermined with nu = 0")
    if nu == 0.0 and not _hull_interior(g):
        raise UnboundedDualError("zero is not inside the convex hull of the moments; the dual is unbounded with nu = 0")

    method = opts.method
    used = 0
    if lambda0 is not None and method in ("auto", "active-set"):
        lam0 = np.asarray(lambda0, dtype=float).reshape(r)
        if np.all(1.0 + g @ lam0 > floor):
            lam, it, ok = _active_set(g, nu, lam0, floor, opts, opts.max_newton)
            used += it
            if ok or method == "active-set":
                return _finish(g, lam, nu, floor, used, "active-set", opts)
    if nu == 0.0 or method == "active-set":
        lam, it, ok = _active_set(g, nu, np.zeros(r), floor, opts, opts.max_newton - used)
        return _finish(g, lam, nu, floor, used + it, "active-set", opts)
    lam, it = _interior_point(g, nu, floor, opts)
    used += it
    lam_p, it2, ok = _active_set(g, nu, lam, floor, opts, max(opts.max_newton - used, 0))
    if ok:
        return _finish(g, lam_p, nu, floor, used + it2, "interior-point", opts)
    # the barrier path stalls when nu is tiny; a cold active-set solve does not
    lam_c, it3, ok = _active_set(g, nu, np.zeros(r), floor, opts, opts.max_newton)
    if ok:
        return _finish(g, lam_c, nu, floor, used + it2 + it3, "active-set", opts)
    return _finish(g, lam, nu, floor, used + it2 + it3, "interior-point", opts)


def profile_gradient(jacobians: np.ndarray, solution: DualSolution) -> np.ndarray:
    """Envelope gradient ``n^-1 sum_t J_t' lam / (1 + lam' g_t)`` from explicit Jacobians."""
    J = np.asarray(jacobians, dtype=float)
    coef = solution.weights[:, None] * solution.lam[None, :]  # weights already carry 1/n
    return np.einsum("tr,trp->p", coef, J)


def model_profile_gradient(model, theta, solution: DualSolution) -> np.ndarray:
    """Same as :func:`profile_gradient` through the model's fast contraction."""
    coef = solution.weights[:, None] * solution.lam[None, :]
    return model.contract(theta, coef)
