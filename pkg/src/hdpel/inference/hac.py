"""Kernel-weighted long-run covariance of a vector series."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InsufficientDataError

__all__ = ["KernelKind", "KernelSpec", "kernel_value", "default_bandwidth", "hac_covariance"]


class KernelKind(str, enum.Enum):
    PARZEN = "parzen"
    TUKEY_HANNING = "tukey-hanning"
    QS = "qs"


@dataclass(frozen=True)
class KernelSpec:
    kind: KernelKind = KernelKind.PARZEN
    bandwidth: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "kind", KernelKind(self.kind))
        except ValueError:
            raise ConfigurationError(f"unknown kernel {self.kind!r}") from None
        if not (self.bandwidth > 0 and math.isfinite(self.bandwidth)):
            raise ConfigurationError(f"bandwidth must be positive, got {self.bandwidth}")


def default_bandwidth(n: int) -> float:
    return float(n) ** 0.2


def kernel_value(spec: KernelSpec | KernelKind | str, x):
    """Kernel weight at ``x`` (vectorized).

    Parzen and Tukey-Hanning vanish outside ``[-1, 1]``; the quadratic
    spectral kernel has unbounded support and equals 1 at the origin.
    """
    kind = spec.kind if isinstance(spec, KernelSpec) else KernelKind(spec)
    xa = np.abs(np.asarray(x, dtype=float))
    if kind is KernelKind.PARZEN:
        out = np.where(
            xa <= 0.5,
            1.0 - 6.0 * xa**2 + 6.0 * xa**3,
            np.where(xa <= 1.0, 2.0 * (1.0 - xa) ** 3, 0.0),
        )
    elif kind is KernelKind.TUKEY_HANNING:
        out = np.where(xa <= 1.0, 0.5 * (1.0 + np.cos(np.pi * xa)), 0.0)
    else:
        w = 6.0 * np.pi * xa / 5.0
        with np.errstate(divide="ignore", invalid="ignore"):
            qs = 25.0 / (12.0 * np.pi**2 * xa**2) * (np.sin(w) / w - np.cos(w))
        # series expansion near 0 avoids cancellation
        small = 1.0 - w**2 / 10.0 + w**4 / 280.0
        out = np.where(xa < 1e-3, small, qs)
    return float(out) if np.ndim(x) == 0 else out


def hac_covariance(f_series, spec: KernelSpec) -> np.ndarray:
    """Kernel sum of lag cross-products ``H_j = n^{-1} sum_t f_t f_{t-j}'``.

    The series is used as given (no demeaning). Lags with zero kernel
    weight are skipped; the result is symmetrized.
    """
    f = np.asarray(f_series, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    n = f.shape[0]
    if n < 2:
        raise InsufficientDataError("long-run covariance needs at least 2 observations")
    xi = f.T @ f / n
    lags = np.arange(1, n)
    weights = kernel_value(spec, lags / spec.bandwidth)
    for j, w in zip(lags, weights):
        if w == 0.0:
            continue
        Hj = f[j:].T @ f[:-j] / n
        xi += w * (Hj + Hj.T)
    return 0.5 * (xi + xi.T)
