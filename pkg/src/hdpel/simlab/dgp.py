"""Simulation designs: sparse VAR(1), VAR-with-shock for local projections, BEKK GARCH."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from ..errors import ConfigurationError
from ..moments import BekkMoments

__all__ = [
    "Family",
    "Case",
    "DgpConfig",
    "make_rng",
    "var_noise_cov",
    "var_design",
    "simulate_var1",
    "gen_var1",
    "gen_shock_series",
    "gen_lp",
    "lp_true_theta",
    "bekk_design",
    "gen_mgarch",
    "bekk_offdiag_mask",
    "bekk_variance_step",
]

LP_G1 = np.array([[0.5, 0.2], [0.0, 0.5]])
LP_B0 = np.array([0.5, 0.5])
LP_SIGMA = np.array([[1.0, 0.5], [0.5, 1.0]])


class Family(str, enum.Enum):
    VAR1 = "var1"
    LP = "lp"
    MGARCH = "mgarch"


class Case(str, enum.Enum):
    I = "I"
    II = "II"


@dataclass(frozen=True)
class DgpConfig:
    """One simulation design.

    ``sparsity`` and ``snr`` drive the VAR coefficient draw; ``horizons``
    and ``lags`` the local-projection regressions; ``offdiag_density`` and
    ``offdiag_value`` the Case II BEKK mask. ``mask_seed`` fixes the mask
    across replications.
    """

    family: Family
    n: int
    dim: int
    case: Case = Case.I
    seed: int = 0
    burn_in: int = 200
    sparsity: float = 0.1
    snr: float = 2.0
    horizons: int = 1
    lags: int = 4
    shock_sds: tuple = (0.077, 0.012)
    shock_split: float = 0.6
    offdiag_density: float = 0.1
    offdiag_value: float = 0.1
    mask_seed: int = 20230101
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        try:
            object.__setattr__(self, "family", Family(self.family))
            object.__setattr__(self, "case", Case(self.case))
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from None
        if self.n < 10:
            raise ConfigurationError(f"n must be at least 10, got {self.n}")
        if self.dim < 1:
            raise ConfigurationError(f"dim must be positive, got {self.dim}")
        if not 0 < self.sparsity <= 1:
            raise ConfigurationError("sparsity must lie in (0, 1]")
        if self.snr <= 0:
            raise ConfigurationError("snr must be positive")
        if self.burn_in < 0 or self.horizons < 0 or self.lags < 1:
            raise ConfigurationError("burn_in and horizons must be >= 0, lags >= 1")


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Counter-based generator for stream ``keys`` under ``seed``.

    Stream ``(i,)`` is replication ``i``; it can be regenerated without
    touching any other stream.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=tuple(keys))))


def var_noise_cov(dim: int, case: Case | str) -> np.ndarray:
    if Case(case) is Case.I:
        return np.eye(dim)
    idx = np.arange(dim)
    return 0.2 ** np.abs(idx[:, None] - idx[None, :])


def _snr(G: np.ndarray, sigma: np.ndarray) -> float:
    gamma = solve_discrete_lyapunov(G, sigma)
    return float(np.trace(gamma) / np.trace(sigma) - 1.0)


def _rescale(G: np.ndarray, sigma: np.ndarray, target: float) -> np.ndarray:
    """Scale ``G`` so that tr Var(G z) / tr Sigma equals ``target`` with spectral radius < 1."""
    rho = float(np.max(np.abs(np.linalg.eigvals(G))))
    lo = 0.0
    if rho > 0:
        hi = 1.0 / rho
    else:
        hi = 1.0
        while _snr(hi * G, sigma) < target:
            hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _snr(mid * G, sigma) < target:
            lo = mid
        else:
            hi = mid
    return lo * G


def var_design(config: DgpConfig, rng: np.random.Generator, max_retries: int = 50) -> np.ndarray:
    """Draw the sparse coefficient matrix and rescale it to the target signal-to-noise ratio."""
    d = config.dim
    sigma = var_noise_cov(d, config.case)
    k = max(1, int(round(config.sparsity * d * d)))
    for _ in range(max_retries):
        G = np.zeros((d, d))
        pos = rng.choice(d * d, size=k, replace=False)
        G.flat[pos] = rng.standard_normal(k)
        if np.any(G != 0):
            return _rescale(G, sigma, config.snr)
    raise ConfigurationError("could not draw a nonzero coefficient matrix")


def simulate_var1(G: np.ndarray, config: DgpConfig, rng: np.random.Generator) -> np.ndarray:
    d = G.shape[0]
    chol = np.linalg.cholesky(var_noise_cov(d, config.case))
    total = config.burn_in + config.n
    eps = rng.standard_normal((total, d)) @ chol.T
    z = np.zeros((total, d))
    prev = np.zeros(d)
    for t in range(total):
        prev = G @ prev + eps[t]
        z[t] = prev
    return z[config.burn_in :]


def gen_var1(config: DgpConfig, rng: np.random.Generator | None = None, design: np.ndarray | None = None):
    """Sparse stable VAR(1) sample.

    Returns ``(data, theta0)`` with ``data`` of shape ``(n, dim)`` and
    ``theta0 = vec(G1)`` in column-major order. ``design`` reuses a fixed
    coefficient matrix instead of drawing one from ``rng``.
    """
    rng = rng if rng is not None else make_rng(config.seed)
    G = var_design(config, rng) if design is None else np.asarray(design, dtype=float)
    return simulate_var1(G, config, rng), G.ravel(order="F")


def gen_shock_series(length: int, rng: np.random.Generator, sds=(0.077, 0.012), split: float = 0.6):
    """Heavy-tailed two-regime shock surrogate.

    The first ``split`` share of the path has standard deviation ``sds[0]``,
    the rest ``sds[1]``. Each draw is a scale mixture: 88% from a narrow
    normal and 12% from a wide one, with the wide scale set so the regime
    variance is exact.
    """
    n1 = int(round(split * length))
    scale = np.where(np.arange(length) < n1, sds[0], sds[1])
    narrow = 0.3
    wide = math.sqrt((1.0 - 0.88 * narrow**2) / 0.12)
    pick = rng.random(length) < 0.12
    z = rng.standard_normal(length) * np.where(pick, wide, narrow)
    return z * scale


def lp_true_theta(horizons: int, lags: int) -> np.ndarray:
    """True local-projection coefficients for the bivariate design.

    Per horizon the regressors are ``(1, shock_t, w_{t-1}, ..., w_{t-lags})``
    with ``w = (z1, z2, shock)``. Only the shock loading and the first lag
    of ``(z1, z2)`` are nonzero: ``e1' G1^h b0`` and row 1 of ``G1^(h+1)``.
    """
    k = 2 + 3 * lags
    out = np.zeros((horizons + 1) * k)
    P = np.eye(2)
    for h in range(horizons + 1):
        out[h * k + 1] = (P @ LP_B0)[0]
        P = LP_G1 @ P
        out[h * k + 2 : h * k + 4] = P[0]
    return out


def gen_lp(config: DgpConfig, shock_series=None, rng: np.random.Generator | None = None):
    """Bivariate VAR(1) driven by an external shock.

    Returns ``(data, theta0)``; ``data`` has columns ``(z1, z2, shock)`` and
    ``theta0`` is the stacked local-projection coefficient vector whose
    shock loadings are the true impulse responses of ``z1``.
    """
    rng = rng if rng is not None else make_rng(config.seed)
    n = config.n
    if shock_series is None:
        shock = gen_shock_series(n, rng, config.shock_sds, config.shock_split)
    else:
        shock = np.asarray(shock_series, dtype=float).ravel()
        if shock.size < n:
            raise ConfigurationError(f"shock series has {shock.size} points, need at least {n}")
        shock = shock[:n]
    chol = np.linalg.cholesky(LP_SIGMA)
    total = config.burn_in + n
    eps = rng.standard_normal((total, 2)) @ chol.T
    s = np.concatenate([np.zeros(config.burn_in), shock])
    z = np.zeros((total, 2))
    prev = np.zeros(2)
    for t in range(total):
        prev = LP_G1 @ prev + LP_B0 * s[t] + eps[t]
        z[t] = prev
    data = np.column_stack([z[config.burn_in :], shock])
    return data, lp_true_theta(config.horizons, config.lags)


def bekk_offdiag_mask(dim: int, density: float, seed: int) -> np.ndarray:
    rng = make_rng(seed)
    off = ~np.eye(dim, dtype=bool)
    mask = np.zeros((dim, dim), dtype=bool)
    cells = np.flatnonzero(off)
    k = int(round(density * cells.size))
    mask.flat[rng.choice(cells, size=k, replace=False)] = True
    return mask


def _psd_sqrt(H: np.ndarray):
    w, V = np.linalg.eigh(H)
    clipped = bool(np.any(w < 1e-12))
    w = np.maximum(w, 1e-12)
    return (V * np.sqrt(w)) @ V.T, clipped


def bekk_design(config: DgpConfig):
    """``(C, D, B)`` of the BEKK design: ``C = I``, ``B = 0.6 I``, ``D`` diagonal 0.6 plus the Case II mask."""
    d = config.dim
    C = np.eye(d)
    B = 0.6 * np.eye(d)
    D = 0.6 * np.eye(d)
    if config.case is Case.II:
        D[bekk_offdiag_mask(d, config.offdiag_density, config.mask_seed)] = config.offdiag_value
    return C, D, B


def bekk_variance_step(H_prev: np.ndarray, y_prev: np.ndarray, C: np.ndarray, D: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``H_t = C'C + D y_{t-1} y_{t-1}' D' + B H_{t-1} B'``, symmetrized."""
    Dy = D @ y_prev
    H = C.T @ C + np.outer(Dy, Dy) + B @ H_prev @ B.T
    return 0.5 * (H + H.T)


def gen_mgarch(config: DgpConfig, rng: np.random.Generator | None = None):
    """BEKK(1,1) sample.

    Returns ``(data, theta0, flagged)``; ``flagged`` is True when some
    ``H_t`` needed eigenvalue clipping.
    """
    rng = rng if rng is not None else make_rng(config.seed)
    d = config.dim
    C, D, B = bekk_design(config)
    K = np.kron(D, D) + np.kron(B, B)
    if np.max(np.abs(np.linalg.eigvals(K))) >= 1:
        raise ConfigurationError("BEKK design is not covariance stationary")
    CC = C.T @ C
    H = np.linalg.solve(np.eye(d * d) - K, CC.ravel()).reshape(d, d)
    H = 0.5 * (H + H.T)
    total = config.burn_in + config.n
    eps = rng.standard_normal((total, d))
    y = np.zeros((total, d))
    prev_y = np.zeros(d)
    flagged = False
    for t in range(total):
        H = bekk_variance_step(H, prev_y, C, D, B)
        root, clipped = _psd_sqrt(H)
        flagged |= clipped
        prev_y = root @ eps[t]
        y[t] = prev_y
    return y[config.burn_in :], BekkMoments.pack(C, D, B), flagged
