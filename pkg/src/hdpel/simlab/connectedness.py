"""Generalized forecast-error variance decomposition of a VAR(1)."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError, UndefinedRowError, UnstableSystemError

__all__ = ["variance_decomposition", "spectral_radius"]


def spectral_radius(G) -> float:
    G = np.asarray(G, dtype=float)
    return float(np.max(np.abs(np.linalg.eigvals(G)))) if G.size else 0.0


def variance_decomposition(G1, Sigma, horizons):
    """Row-normalized generalized variance shares and their column sums.

    For horizon ``h`` entry ``(i, j)`` before normalization is
    ``sigma_jj^{-1} sum_{l<h} (e_i' G^l Sigma e_j)^2`` divided by
    ``sum_{l<h} e_i' G^l Sigma G^l' e_i``.

    Parameters
    ----------
    G1 : ndarray, shape (d, d)
        VAR(1) coefficient matrix with spectral radius below one.
    Sigma : ndarray, shape (d, d)
        Innovation covariance with positive diagonal.
    horizons : int or iterable of int
        An int ``H`` means horizons ``1..H``.

    Returns
    -------
    dict
        ``{h: (D_tilde, column_sums)}``.
    """
    G = np.asarray(G1, dtype=float)
    S = np.asarray(Sigma, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1] or S.shape != G.shape:
        raise ConfigurationError("G1 and Sigma must be square matrices of the same size")
    if not np.allclose(S, S.T, atol=1e-12):
        raise ConfigurationError("Sigma must be symmetric")
    if np.any(np.diag(S) < 0):
        raise ConfigurationError("Sigma must have a nonnegative diagonal")
    zero = np.flatnonzero(np.diag(S) == 0)
    if zero.size:
        i = int(zero[0])
        raise UndefinedRowError(f"row {i} is undefined: innovation variance sigma_{i}{i} is zero", i)
    if np.min(np.linalg.eigvalsh(S)) < -1e-10 * max(1.0, np.abs(S).max()):
        raise ConfigurationError("Sigma must be positive semidefinite")
    rho = spectral_radius(G)
    if rho >= 1.0:
        raise UnstableSystemError(f"G1 is not stable: spectral radius {rho:.6g}", rho)
    hs = list(range(1, int(horizons) + 1)) if np.isscalar(horizons) else sorted(int(h) for h in horizons)
    if not hs or hs[0] < 1:
        raise ConfigurationError("horizons must be positive integers")
    d = G.shape[0]
    num = np.zeros((d, d))
    den = np.zeros(d)
    P = np.eye(d)
    out = {}
    sig = np.diag(S)
    for ell in range(hs[-1]):
        PS = P @ S
        num += PS**2 / sig[None, :]
        den += np.einsum("ij,ij->i", PS, P)
        h = ell + 1
        if h in hs:
            bad = np.flatnonzero(den <= 0)
            if bad.size:
                raise UndefinedRowError(f"forecast-error variance of row {int(bad[0])} is zero", int(bad[0]))
            D = num / den[:, None]
            rs = D.sum(axis=1)
            bad = np.flatnonzero(rs <= 0)
            if bad.size:
                raise UndefinedRowError(f"row {int(bad[0])} has no variance share", int(bad[0]))
            Dt = D / rs[:, None]
            out[h] = (Dt, Dt.sum(axis=0))
        P = G @ P
    return out
