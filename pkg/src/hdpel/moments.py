"""Estimating-function families ``g_t(theta)`` and their sample averages.

Every model works on the effective sample ``t = 0..n-1`` (after dropping
the lags it needs) and exposes the batched vector-Jacobian product
``_vjp``; both the full Jacobian and the fast gradient contraction used
by the outer solver are derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, InsufficientDataError, NumericalEvaluationError

__all__ = [
    "MomentModel",
    "FunctionMoments",
    "VarMoments",
    "LocalProjectionMoments",
    "BekkMoments",
    "SampleMoments",
    "var_moments",
    "lp_moments",
    "mgarch_bekk_moments",
    "sample_moments",
    "vech",
    "unvech",
]


def vech(a: np.ndarray) -> np.ndarray:
    """Stack the lower triangle of ``a`` column by column."""
    d = a.shape[-1]
    rows, cols = _vech_index(d)
    return a[..., rows, cols]


def unvech(v: np.ndarray, d: int) -> np.ndarray:
    """Inverse of :func:`vech` into a lower-triangular matrix."""
    rows, cols = _vech_index(d)
    out = np.zeros(v.shape[:-1] + (d, d))
    out[..., rows, cols] = v
    return out


def _vech_index(d: int):
    cols, rows = np.triu_indices(d)  # column-major lower triangle
    return rows, cols


class MomentModel:
    """Base class: ``n`` observations of an ``r``-vector ``g_t(theta)``, ``theta`` in R^p."""

    n: int
    r: int
    p: int
    names: list[str] | None = None

    def moments(self, theta: np.ndarray) -> np.ndarray:
        """All ``g_t(theta)`` stacked as an ``(n, r)`` array."""
        raise NotImplementedError

    def _vjp(self, theta: np.ndarray, coef: np.ndarray) -> np.ndarray:
        """Per-observation ``J_t^T c_{t,b}`` for ``coef`` of shape ``(n, B, r)``."""
        raise NotImplementedError

    def contract(self, theta: np.ndarray, coef: np.ndarray) -> np.ndarray:
        """Return ``sum_t J_t(theta)^T coef_t`` for ``coef`` of shape ``(n, r)``."""
        return self._vjp(theta, np.asarray(coef, dtype=float)[:, None, :]).sum(axis=0)[0]

    def jacobians(self, theta: np.ndarray) -> np.ndarray:
        """All ``d g_t / d theta^T`` as an ``(n, r, p)`` array."""
        eye = np.broadcast_to(np.eye(self.r), (self.n, self.r, self.r))
        return self._vjp(theta, eye)

    def eval(self, t: int, theta: np.ndarray) -> np.ndarray:
        return self.moments(theta)[t]

    def jac(self, t: int, theta: np.ndarray) -> np.ndarray:
        return self.jacobians(theta)[t]

    def check_theta(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float).reshape(-1)
        if theta.size != self.p:
            raise ConfigurationError(f"theta has length {theta.size}, model expects {self.p}")
        if not np.all(np.isfinite(theta)):
            raise NumericalEvaluationError("theta contains non-finite entries")
        return theta


class FunctionMoments(MomentModel):
    """User-supplied moments from vectorized callables.

    ``moments_fn(theta)`` must return ``(n, r)``; ``jac_fn(theta)`` returns
    ``(n, r, p)``. Without ``jac_fn`` the Jacobian falls back to central
    differences with step ``fd_step``.
    """

    def __init__(
        self,
        moments_fn: Callable[[np.ndarray], np.ndarray],
        p: int,
        jac_fn: Callable[[np.ndarray], np.ndarray] | None = None,
        fd_step: float = 1e-6,
        names: list[str] | None = None,
    ):
        probe = np.asarray(moments_fn(np.zeros(p)), dtype=float)
        if probe.ndim != 2:
            raise ConfigurationError("moments_fn must return an (n, r) array")
        self.n, self.r = probe.shape
        self.p = int(p)
        self._fn = moments_fn
        self._jac = jac_fn
        self._h = fd_step
        self.names = names

    def moments(self, theta):
        return np.asarray(self._fn(np.asarray(theta, dtype=float)), dtype=float)

    def jacobians(self, theta):
        theta = np.asarray(theta, dtype=float)
        if self._jac is not None:
            return np.asarray(self._jac(theta), dtype=float)
        out = np.empty((self.n, self.r, self.p))
        for k in range(self.p):
            e = np.zeros(self.p)
            e[k] = self._h
            out[:, :, k] = (self.moments(theta + e) - self.moments(theta - e)) / (2 * self._h)
        return out

    def _vjp(self, theta, coef):
        return np.einsum("tbr,trp->tbp", coef, self.jacobians(theta))


class VarMoments(MomentModel):
    """VAR(l) moments ``(z_t - sum_j G_j z_{t-j}) kron (1, z_{t-1}', ..., z_{t-l}')'``.

    ``theta = (vec(G_1)', ..., vec(G_l)')'`` with column-major ``vec``.
    """

    def __init__(self, data: np.ndarray, lag: int = 1, demean: bool = False, names=None):
        z = np.asarray(data, dtype=float)
        if z.ndim != 2:
            raise ConfigurationError("VAR data must be an (n, d) matrix")
        if lag < 1:
            raise ConfigurationError("lag must be a positive integer")
        if z.shape[0] <= lag:
            raise InsufficientDataError(f"VAR({lag}) needs more than {lag} observations, got {z.shape[0]}")
        if not np.all(np.isfinite(z)):
            raise NumericalEvaluationError("VAR data contain non-finite values")
        if demean:
            z = z - z.mean(axis=0)
        nobs, d = z.shape
        self.d, self.lag = d, lag
        self.Y = z[lag:]
        self.L = np.hstack([z[lag - j : nobs - j] for j in range(1, lag + 1)])
        self.X = np.hstack([np.ones((nobs - lag, 1)), self.L])
        self.n = nobs - lag
        self.k = 1 + lag * d
        self.r = d * self.k
        self.p = lag * d * d
        self.names = names or [f"G{j + 1}[{i},{c}]" for j in range(lag) for c in range(d) for i in range(d)]

    def coef_matrix(self, theta) -> np.ndarray:
        """``[G_1, ..., G_l]`` as a ``(d, l*d)`` matrix."""
        return np.asarray(theta, dtype=float).reshape(self.d, self.lag * self.d, order="F")

    def residuals(self, theta) -> np.ndarray:
        return self.Y - self.L @ self.coef_matrix(theta).T

    def moments(self, theta):
        e = self.residuals(theta)
        return (e[:, :, None] * self.X[:, None, :]).reshape(self.n, self.r)

    def _vjp(self, theta, coef):
        c = coef.reshape(self.n, -1, self.d, self.k)
        u = np.einsum("tbik,tk->tbi", c, self.X)
        grad = -u[:, :, :, None] * self.L[:, None, None, :]  # (n, B, d, l*d)
        return grad.transpose(0, 1, 3, 2).reshape(self.n, -1, self.p)

    def contract(self, theta, coef):
        u = np.einsum("tik,tk->ti", np.asarray(coef).reshape(self.n, self.d, self.k), self.X)
        return (-(u.T @ self.L)).reshape(-1, order="F")

    def ols(self) -> np.ndarray:
        """Least-squares ``theta`` (no intercept), used as the default start."""
        coef, *_ = np.linalg.lstsq(self.L, self.Y, rcond=None)
        return coef.T.reshape(-1, order="F")


class LocalProjectionMoments(MomentModel):
    """Stacked local-projection regressions for horizons ``0..H``.

    Horizon ``h`` regresses ``y_{t+h}`` on ``x_t = (1, shock_t, w_{t-1}', ...,
    w_{t-l}')'`` and contributes the block ``(y_{t+h} - x_t' b_h) x_t``; the
    block is zero for the last ``h`` effective observations where ``t + h``
    runs past the sample. ``theta`` stacks ``b_0, ..., b_H``.
    """

    def __init__(self, target, shock, controls=None, horizons: int = 0, lags: int = 1):
        y = np.asarray(target, dtype=float).reshape(-1)
        s = np.asarray(shock, dtype=float).reshape(-1)
        nobs = y.size
        if s.size != nobs:
            raise ConfigurationError("target and shock must have equal length")
        w = np.zeros((nobs, 0)) if controls is None else np.asarray(controls, dtype=float)
        if w.ndim == 1:
            w = w[:, None]
        if w.shape[0] != nobs:
            raise ConfigurationError("controls must have one row per observation")
        if horizons < 0 or lags < 0:
            raise ConfigurationError("horizons and lags must be nonnegative")
        if nobs <= horizons + lags:
            raise InsufficientDataError(
                f"local projection with H={horizons}, l={lags} needs more than {horizons + lags} observations"
            )
        q = w.shape[1]
        self.H, self.lags, self.q = horizons, lags, q
        idx = np.arange(lags, nobs)
        self.n = idx.size
        parts = [np.ones((self.n, 1)), s[idx, None]]
        parts += [w[idx - j] for j in range(1, lags + 1)]
        self.X = np.hstack(parts)
        self.k = self.X.shape[1]
        self.r = self.p = (horizons + 1) * self.k
        lead = idx[:, None] + np.arange(horizons + 1)[None, :]
        self.mask = (lead < nobs).astype(float)  # (n, H+1)
        self.Ylead = np.where(lead < nobs, y[np.minimum(lead, nobs - 1)], 0.0)
        self.names = [
            f"h{h}:{nm}"
            for h in range(horizons + 1)
            for nm in ["alpha", "beta"] + [f"w{c}_lag{j}" for j in range(1, lags + 1) for c in range(q)]
        ]

    def residuals(self, theta):
        b = np.asarray(theta, dtype=float).reshape(self.H + 1, self.k)
        return (self.Ylead - self.X @ b.T) * self.mask

    def moments(self, theta):
        e = self.residuals(theta)
        return (e[:, :, None] * self.X[:, None, :]).reshape(self.n, self.r)

    def _vjp(self, theta, coef):
        c = coef.reshape(self.n, -1, self.H + 1, self.k)
        u = np.einsum("tbhk,tk->tbh", c, self.X) * self.mask[:, None, :]
        return -(u[..., None] * self.X[:, None, None, :]).reshape(self.n, -1, self.p)

    def contract(self, theta, coef):
        u = np.einsum("thk,tk->th", np.asarray(coef).reshape(self.n, self.H + 1, self.k), self.X)
        return (-(u * self.mask).T @ self.X).reshape(-1)

    def ols(self) -> np.ndarray:
        out = np.empty((self.H + 1, self.k))
        for h in range(self.H + 1):
            keep = self.mask[:, h] > 0
            out[h], *_ = np.linalg.lstsq(self.X[keep], self.Ylead[keep, h], rcond=None)
        return out.reshape(-1)

    def beta_index(self, h: int) -> int:
        """Position of the shock coefficient of horizon ``h`` inside ``theta``."""
        return h * self.k + 1


class BekkMoments(MomentModel):
    """Unconditional moments of a BEKK(1,1) model.

    ``S_t = y_t y_t' - C'C - D Y_{t-1} D' - B Y_{t-1} B'`` with
    ``Y_{t-1} = y_{t-1} y_{t-1}'``. The first block is
    ``vech(S_t) kron q(y_{t-2})`` with ``q`` the first ``K`` coordinates; the
    second is ``(y_t y_t' - C'C - D Y_{t-1} D') y_{t-1}``, which carries no
    ``B`` term. ``theta = (vech(C)', vec(D)', vec(B)')'`` with ``C`` lower
    triangular.
    """

    def __init__(self, data: np.ndarray, basis_dim: int = 5):
        y = np.asarray(data, dtype=float)
        if y.ndim != 2:
            raise ConfigurationError("BEKK data must be an (n, d) matrix")
        nobs, d = y.shape
        if basis_dim < 1 or basis_dim > d:
            raise ConfigurationError(f"basis_dim must lie in [1, {d}], got {basis_dim}")
        if nobs < 3:
            raise InsufficientDataError("BEKK moments need at least 3 observations")
        self.d, self.K = d, basis_dim
        self.y0, self.y1, self.y2 = y[2:], y[1:-1], y[:-2]
        self.q = self.y2[:, :basis_dim]
        self.n = nobs - 2
        self.nv = d * (d + 1) // 2
        self.r = basis_dim * self.nv + d
        self.p = self.nv + 2 * d * d
        self._rows, self._cols = _vech_index(d)
        self.names = (
            [f"C[{i},{j}]" for i, j in zip(self._rows, self._cols)]
            + [f"D[{i},{j}]" for j in range(d) for i in range(d)]
            + [f"B[{i},{j}]" for j in range(d) for i in range(d)]
        )

    def unpack(self, theta):
        theta = np.asarray(theta, dtype=float)
        d, nv = self.d, self.nv
        C = unvech(theta[:nv], d)
        D = theta[nv : nv + d * d].reshape(d, d, order="F")
        B = theta[nv + d * d :].reshape(d, d, order="F")
        return C, D, B

    @staticmethod
    def pack(C, D, B) -> np.ndarray:
        return np.concatenate([vech(np.asarray(C)), np.asarray(D).reshape(-1, order="F"), np.asarray(B).reshape(-1, order="F")])

    def moments(self, theta):
        C, D, B = self.unpack(theta)
        CC = C.T @ C
        dy = self.y1 @ D.T
        by = self.y1 @ B.T
        S2 = self.y0[:, :, None] * self.y0[:, None, :] - CC - dy[:, :, None] * dy[:, None, :]
        S1 = S2 - by[:, :, None] * by[:, None, :]
        g1 = (vech(S1)[:, :, None] * self.q[:, None, :]).reshape(self.n, -1)
        g2 = np.einsum("tij,tj->ti", S2, self.y1)
        return np.hstack([g1, g2])

    def _weights(self, coef):
        """Symmetric matrices W1, W2 with ``coef . g_t = <S1, W1> + <S2, W2>``."""
        nb = coef.shape[1]
        c1 = coef[..., : self.K * self.nv].reshape(self.n, nb, self.nv, self.K)
        c2 = coef[..., self.K * self.nv :]
        a = np.einsum("tbvk,tk->tbv", c1, self.q)
        W1 = np.zeros((self.n, nb, self.d, self.d))
        W1[..., self._rows, self._cols] = a
        W1 = 0.5 * (W1 + np.swapaxes(W1, -1, -2))
        outer = c2[..., :, None] * self.y1[:, None, None, :]
        W2 = 0.5 * (outer + np.swapaxes(outer, -1, -2))
        return W1, W2

    def _vjp(self, theta, coef):
        C, D, B = self.unpack(theta)
        W1, W2 = self._weights(coef)
        W12 = W1 + W2
        dy = self.y1 @ D.T
        by = self.y1 @ B.T
        gC = -2.0 * np.einsum("ij,tbjk->tbik", C, W12)
        gD = -2.0 * np.einsum("tbij,tj,tk->tbik", W12, dy, self.y1)
        gB = -2.0 * np.einsum("tbij,tj,tk->tbik", W1, by, self.y1)
        nt, nb = coef.shape[:2]
        return np.concatenate(
            [
                gC[..., self._rows, self._cols],
                np.swapaxes(gD, -1, -2).reshape(nt, nb, -1),
                np.swapaxes(gB, -1, -2).reshape(nt, nb, -1),
            ],
            axis=-1,
        )

    def contract(self, theta, coef):
        C, D, B = self.unpack(theta)
        W1, W2 = self._weights(np.asarray(coef, dtype=float)[:, None, :])
        W1, W2 = W1[:, 0], W2[:, 0]
        W12 = W1 + W2
        dy = self.y1 @ D.T
        by = self.y1 @ B.T
        gC = -2.0 * C @ W12.sum(axis=0)
        gD = -2.0 * np.einsum("tij,tj,tk->ik", W12, dy, self.y1)
        gB = -2.0 * np.einsum("tij,tj,tk->ik", W1, by, self.y1)
        return np.concatenate([gC[self._rows, self._cols], gD.reshape(-1, order="F"), gB.reshape(-1, order="F")])


def var_moments(data, lag: int = 1, demean: bool = False) -> VarMoments:
    return VarMoments(data, lag, demean=demean)


def lp_moments(target, shock, controls=None, horizons: int = 0, lags: int = 1) -> LocalProjectionMoments:
    return LocalProjectionMoments(target, shock, controls, horizons, lags)


def mgarch_bekk_moments(data, basis_dim: int = 5) -> BekkMoments:
    return BekkMoments(data, basis_dim)


@dataclass
class SampleMoments:
    """Sample mean ``gbar``, mean Jacobian ``Gbar`` and second moment ``Vhat``."""

    gbar: np.ndarray
    Gbar: np.ndarray
    Vhat: np.ndarray


def checked_moments(model: MomentModel, theta) -> np.ndarray:
    """``model.moments`` with a non-finite check that reports the first bad ``t``."""
    g = model.moments(theta)
    if not np.all(np.isfinite(g)):
        bad = int(np.argmax(~np.all(np.isfinite(g), axis=1)))
        raise NumericalEvaluationError(f"non-finite moment value at t={bad}", t=bad)
    return g


def sample_moments(model: MomentModel, theta) -> SampleMoments:
    theta = model.check_theta(theta)
    g = checked_moments(model, theta)
    J = model.jacobians(theta)
    V = g.T @ g / model.n
    return SampleMoments(g.mean(axis=0), J.mean(axis=0), 0.5 * (V + V.T))
