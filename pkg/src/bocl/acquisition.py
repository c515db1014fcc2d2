"""Acquisition functions, local penalization, and conditioning-based penalty diagnostics.

All acquisitions are written for minimization and are monotonically
non-decreasing in the predictive standard deviation for fixed mean,
the property the batch-diversity mechanism relies on:

* expected improvement over the incumbent, with an exploration offset
  ``xi``:  EI = (f_best - xi - mu) * CDF(Z) + sigma * PDF(Z),
  Z = (f_best - xi - mu) / sigma
* confidence bound for minimization:  -mu + sqrt(beta) * sigma
* probability of improvement:  CDF(Z)
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .core import InvalidInputError, UndefinedResultError, as_point
from .gp import GpPosterior, PosteriorMoments

__all__ = [
    "AcqSpec",
    "LpPenalty",
    "acq_value",
    "acq_values",
    "lp_penalty_factor",
    "lp_penalty_factors",
    "lp_acq_value",
    "implicit_penalizer",
    "delta_ei_first_order",
    "norm_cdf",
    "norm_pdf",
]

ACQ_KINDS = ("ei", "ucb", "pi")
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(z):
    """Standard normal CDF via erf (accurate well past 1e-12)."""
    return 0.5 * (1.0 + erf(np.asarray(z, dtype=float) / _SQRT2))


def norm_pdf(z):
    z = np.asarray(z, dtype=float)
    return np.exp(-0.5 * z * z) / _SQRT2PI


@dataclass(frozen=True)
class AcqSpec:
    """Acquisition choice plus its exploration parameters."""

    kind: str = "ei"
    xi: float = 0.01
    beta: float = 2.0

    def __post_init__(self):
        if self.kind not in ACQ_KINDS:
            raise InvalidInputError(f"unknown acquisition {self.kind!r}; options: {ACQ_KINDS}")
        if self.xi < 0:
            raise InvalidInputError("xi must be >= 0")
        if self.beta <= 0:
            raise InvalidInputError("beta must be > 0")


def acq_value(spec: AcqSpec, m: PosteriorMoments, f_best: float) -> float:
    """Score a predictive distribution against the incumbent ``f_best``."""
    sigma = math.sqrt(max(m.variance, 0.0))
    if spec.kind == "ucb":
        return -m.mean + math.sqrt(spec.beta) * sigma
    improvement = f_best - spec.xi - m.mean
    if sigma == 0.0:
        if spec.kind == "ei":
            return max(improvement, 0.0)
        return 1.0 if improvement > 0 else 0.0
    z = improvement / sigma
    if spec.kind == "pi":
        return float(norm_cdf(z))
    ei = improvement * float(norm_cdf(z)) + sigma * float(norm_pdf(z))
    return max(ei, 0.0)


def acq_values(spec: AcqSpec, means: np.ndarray, variances: np.ndarray,
               f_best: float) -> np.ndarray:
    """Vectorized :func:`acq_value` over parallel mean/variance arrays."""
    means = np.asarray(means, dtype=float)
    sigma = np.sqrt(np.maximum(np.asarray(variances, dtype=float), 0.0))
    if spec.kind == "ucb":
        return -means + math.sqrt(spec.beta) * sigma
    improvement = f_best - spec.xi - means
    positive = sigma > 0.0
    z = np.divide(improvement, sigma, out=np.zeros_like(sigma), where=positive)
    if spec.kind == "pi":
        return np.where(positive, norm_cdf(z), (improvement > 0).astype(float))
    ei = improvement * norm_cdf(z) + sigma * norm_pdf(z)
    return np.where(positive, np.maximum(ei, 0.0), np.maximum(improvement, 0.0))


@dataclass(frozen=True, eq=False)
class LpPenalty:
    """Multiplicative repulsion around already-selected batch points.

    Each anchor contributes the factor
    ``1 - exp(-||x - anchor||^2 / (2 * lengthscale^2))``,
    zero at the anchor and approaching one far away.
    """

    anchor_points: np.ndarray  # (k, d); k may be 0
    lengthscale: float

    def __post_init__(self):
        pts = np.asarray(self.anchor_points, dtype=float)
        if pts.size == 0:
            pts = pts.reshape(0, max(pts.shape[-1] if pts.ndim > 1 else 1, 1))
        pts = np.atleast_2d(pts)
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise InvalidInputError("penalty lengthscale must be positive")
        object.__setattr__(self, "anchor_points", pts)


def lp_penalty_factor(pen: LpPenalty, x) -> float:
    """Product of per-anchor repulsion factors at ``x`` (1.0 with no anchors)."""
    if pen.anchor_points.shape[0] == 0:
        return 1.0
    p = as_point(x, pen.anchor_points.shape[1])
    sq = np.sum((pen.anchor_points - p[None, :]) ** 2, axis=1)
    factors = 1.0 - np.exp(-sq / (2.0 * pen.lengthscale**2))
    return float(np.prod(factors))


def lp_penalty_factors(pen: LpPenalty, X) -> np.ndarray:
    """Vectorized :func:`lp_penalty_factor` over the rows of ``X``."""
    pts = np.atleast_2d(np.asarray(X, dtype=float))
    if pen.anchor_points.shape[0] == 0:
        return np.ones(pts.shape[0])
    diff = pts[:, None, :] - pen.anchor_points[None, :, :]
    sq = np.sum(diff * diff, axis=-1)
    return np.prod(1.0 - np.exp(-sq / (2.0 * pen.lengthscale**2)), axis=1)


def lp_acq_value(base: float, pen: LpPenalty, x) -> float:
    """Penalized acquisition: nonnegative base times the repulsion product."""
    return base * lp_penalty_factor(pen, x)


def implicit_penalizer(
    g_before: GpPosterior,
    g_after: GpPosterior,
    x,
    f_best: float,
    xi: float = 0.0,
) -> tuple[float, float]:
    """Conditioning-induced EI suppression ratio and the sigma ratio at ``x``.

    ``g_after`` should be ``g_before`` conditioned at some point with
    its own posterior-mean value, so the mean surface is unchanged and
    the EI ratio isolates the variance effect.  Returns
    ``(EI_after / EI_before, sigma_after / sigma_before)``.
    """
    spec = AcqSpec("ei", xi=xi)
    m_before = g_before.predict(x)
    m_after = g_after.predict(x)
    ei_before = acq_value(spec, m_before, f_best)
    if ei_before <= 1e-300:
        raise UndefinedResultError("EI before conditioning is zero; ratio undefined")
    psi = acq_value(spec, m_after, f_best) / ei_before
    sigma_before = math.sqrt(max(m_before.variance, 0.0))
    if sigma_before == 0.0:
        raise UndefinedResultError("sigma before conditioning is zero; ratio undefined")
    sigma_ratio = math.sqrt(max(m_after.variance, 0.0)) / sigma_before
    return psi, sigma_ratio


def delta_ei_first_order(
    g: GpPosterior, x, x_star, y_tilde: float, f_best: float
) -> float:
    """First-order EI change at ``x`` from conditioning on ``(x_star, y_tilde)``.

    Expands EI to first order in the mean shift and variance reduction:
    ``-dmu * CDF(Z) - dvar / (2 sigma) * PDF(Z)`` with
    ``Z = (f_best - mu) / sigma``, ``dmu = w * (y_tilde - mu(x_star))``,
    ``dvar = cov(x, x_star)^2 / (var(x_star) + noise)`` and
    ``w = cov(x, x_star) / (var(x_star) + noise)``.
    """
    m = g.predict(x)
    sigma = math.sqrt(max(m.variance, 0.0))
    if sigma <= 0.0:
        raise InvalidInputError("first-order expansion requires sigma(x) > 0")
    m_star = g.predict(x_star)
    cov = g.posterior_cov(x, x_star)
    denom = m_star.variance + g.noise_variance
    weight = cov / denom
    d_mean = weight * (y_tilde - m_star.mean)
    d_var = cov * cov / denom
    z = (f_best - m.mean) / sigma
    return float(-d_mean * norm_cdf(z) - (d_var / (2.0 * sigma)) * norm_pdf(z))
