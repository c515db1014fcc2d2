"""Stationary covariance kernels with per-dimension lengthscales (ARD).

Two families: the squared exponential
``k(x, x') = s2 * exp(-0.5 * sum_i ((x_i - x'_i) / l_i)^2)``
and Matern 5/2
``k(x, x') = s2 * (1 + sqrt(5) r + 5 r^2 / 3) * exp(-sqrt(5) r)``
with scaled distance ``r = sqrt(sum_i ((x_i - x'_i) / l_i)^2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .core import InvalidInputError, NumericalError, as_point

__all__ = [
    "KernelFamily",
    "KernelParams",
    "SIGNAL_VARIANCE_BOUNDS",
    "LENGTHSCALE_BOUNDS",
    "DEFAULT_NOISE_VARIANCE",
    "kernel_eval",
    "kernel_vector",
    "kernel_cross",
    "kernel_matrix",
    "cholesky_with_jitter",
]

SIGNAL_VARIANCE_BOUNDS = (1e-3, 1e3)
LENGTHSCALE_BOUNDS = (1e-2, 1e2)
DEFAULT_NOISE_VARIANCE = 1e-6

# Diagonal jitter escalation used when a covariance factorization fails.
_JITTER_START = 1e-10
_JITTER_GROWTH = 10.0
_JITTER_MAX = 1e-4


class KernelFamily(str, enum.Enum):
    SQUARED_EXPONENTIAL = "se"
    MATERN52 = "matern52"


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Kernel hyperparameters: signal variance and one lengthscale per dimension."""

    signal_variance: float
    lengthscales: np.ndarray
    family: KernelFamily = KernelFamily.MATERN52

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        sv = float(self.signal_variance)
        lo_sv, hi_sv = SIGNAL_VARIANCE_BOUNDS
        lo_ls, hi_ls = LENGTHSCALE_BOUNDS
        if not (np.isfinite(sv) and lo_sv <= sv <= hi_sv):
            raise InvalidInputError(f"signal_variance {sv} outside [{lo_sv}, {hi_sv}]")
        if ls.ndim != 1 or not np.all(np.isfinite(ls)):
            raise InvalidInputError("lengthscales must be a finite 1-D vector")
        if not np.all((ls >= lo_ls) & (ls <= hi_ls)):
            raise InvalidInputError(f"lengthscales outside [{lo_ls}, {hi_ls}]")
        object.__setattr__(self, "signal_variance", sv)
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "family", KernelFamily(self.family))

    @property
    def dim(self) -> int:
        return self.lengthscales.size


def _scaled_sqdist(a: np.ndarray, b: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    """(nA, nB) matrix of squared lengthscale-scaled distances."""
    sa = a / lengthscales
    sb = b / lengthscales
    diff = sa[:, None, :] - sb[None, :, :]
    return np.maximum(np.sum(diff * diff, axis=-1), 0.0)


def _apply_family(params: KernelParams, r2: np.ndarray) -> np.ndarray:
    if params.family is KernelFamily.SQUARED_EXPONENTIAL:
        return params.signal_variance * np.exp(-0.5 * r2)
    r = np.sqrt(r2)
    sqrt5_r = math.sqrt(5.0) * r
    return params.signal_variance * (1.0 + sqrt5_r + (5.0 / 3.0) * r2) * np.exp(-sqrt5_r)


def kernel_eval(params: KernelParams, x, x2) -> float:
    """Covariance between two points."""
    a = as_point(x, params.dim)
    b = as_point(x2, params.dim)
    r2 = _scaled_sqdist(a[None, :], b[None, :], params.lengthscales)
    return float(_apply_family(params, r2)[0, 0])


def kernel_cross(params: KernelParams, a, b) -> np.ndarray:
    """Cross-covariance matrix between two point sets, shapes (nA, d) and (nB, d)."""
    A = np.atleast_2d(np.asarray(a, dtype=float))
    B = np.atleast_2d(np.asarray(b, dtype=float))
    if A.shape[1] != params.dim or B.shape[1] != params.dim:
        raise InvalidInputError("point dimension does not match kernel lengthscales")
    return _apply_family(params, _scaled_sqdist(A, B, params.lengthscales))


def kernel_vector(params: KernelParams, X, x_star) -> np.ndarray:
    """Length-n vector of covariances between ``x_star`` and each row of ``X``."""
    xs = as_point(x_star, params.dim)
    return kernel_cross(params, X, xs[None, :])[:, 0]


def kernel_matrix(params: KernelParams, X, noise_variance: float) -> np.ndarray:
    """Gram matrix plus noise on the diagonal: symmetric, PD for distinct rows."""
    if noise_variance < 0:
        raise InvalidInputError("noise_variance must be >= 0")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    K = kernel_cross(params, X, X)
    return K + noise_variance * np.eye(X.shape[0])


def cholesky_with_jitter(mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor, escalating diagonal jitter on failure.

    Jitter starts at 1e-10 and grows tenfold up to 1e-4; beyond that a
    :class:`NumericalError` carrying the attempted levels is raised.
    Returns the factor and the jitter that was finally applied (0 if none).
    """
    try:
        return np.linalg.cholesky(mat), 0.0
    except np.linalg.LinAlgError:
        pass
    attempted = []
    jitter = _JITTER_START
    eye = np.eye(mat.shape[0])
    while jitter <= _JITTER_MAX * (1 + 1e-12):
        attempted.append(jitter)
        try:
            return np.linalg.cholesky(mat + jitter * eye), jitter
        except np.linalg.LinAlgError:
            jitter *= _JITTER_GROWTH
    raise NumericalError(
        f"matrix not positive definite after jitter up to {attempted[-1]:g}",
        jitter_levels=tuple(attempted),
    )
