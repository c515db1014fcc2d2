"""Multiquadric RBF interpolant with power-function uncertainty.

The interpolant places one normalized multiquadric basis function
``phi(r) = sqrt(1 + r^2 / eps^2)`` on every training input and solves
``(Phi + reg * I) w = y``.  Its uncertainty proxy is the power function
``sigma(x) = |1 - phi(x)^T (Phi + reg * I)^{-1} phi(x)|^{1/2}``: zero at
the data (up to regularization) and growing away from it, which is the
structural property batch conditioning needs.  Conditioning on a new
observation expands the system by one center and re-solves it -- fast
linear algebra, no iterative training.

The multiquadric Gram matrix is only conditionally positive definite
(it is indefinite even with the small diagonal regularization), so the
stored factorization is an LU decomposition rather than a Cholesky one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .core import Dataset, InvalidInputError, NumericalError, as_point, pairwise_distances
from .gp import PosteriorMoments

__all__ = ["RbfModel", "rbf_fit"]

DEFAULT_REGULARIZATION = 1e-4


def _phi(r: np.ndarray, epsilon: float) -> np.ndarray:
    return np.sqrt(1.0 + (r / epsilon) ** 2)


def _cross_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    diff = a[:, None, :] - b[None, :, :]
    return np.sqrt(np.maximum(np.sum(diff * diff, axis=-1), 0.0))


@dataclass(frozen=True, eq=False)
class RbfModel:
    """Fitted multiquadric interpolant over data-dependent centers."""

    centers: np.ndarray  # (n, d) == training inputs
    weights: np.ndarray  # (n,)
    epsilon: float
    regularization: float
    data: Dataset
    phi_factor: tuple  # LU factorization of Phi + reg * I

    @property
    def n(self) -> int:
        return self.centers.shape[0]

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def targets(self) -> np.ndarray:
        return self.data.targets_normalized

    def _basis(self, X) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(X, dtype=float))
        return _phi(_cross_dist(pts, self.centers), self.epsilon)

    def predict(self, x) -> PosteriorMoments:
        """Interpolant value and squared power function at one point."""
        p = as_point(x, self.dim)
        phi_vec = self._basis(p[None, :])[0]
        mean = float(phi_vec @ self.weights)
        t = lu_solve(self.phi_factor, phi_vec, check_finite=False)
        variance = abs(1.0 - float(phi_vec @ t))
        return PosteriorMoments(mean, variance)

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        B = self._basis(X)
        means = B @ self.weights
        T = lu_solve(self.phi_factor, B.T, check_finite=False)
        variances = np.abs(1.0 - np.sum(B.T * T, axis=0))
        return means, variances

    def condition(self, x_star, y_tilde: float) -> "RbfModel":
        """Model refit over n+1 centers; the spread stays frozen.

        ``y_tilde`` is in normalized target space.  Rejects a point that
        exactly coincides with an existing center (the expanded system
        would be singular).
        """
        p = as_point(x_star, self.dim)
        if not np.isfinite(y_tilde):
            raise InvalidInputError("pseudo-observation value must be finite")
        dists = np.sqrt(np.sum((self.centers - p[None, :]) ** 2, axis=1))
        if np.any(dists == 0.0):
            raise InvalidInputError("conditioning point coincides with an existing center")
        data_new = self.data.with_observation(p, self.data.denormalize(float(y_tilde)))
        return _solve(data_new, self.epsilon, self.regularization)


def _solve(data: Dataset, epsilon: float, regularization: float) -> RbfModel:
    centers = data.points
    phi_mat = _phi(_cross_dist(centers, centers), epsilon)
    system = phi_mat + regularization * np.eye(centers.shape[0])
    factor = lu_factor(system, check_finite=False)
    weights = lu_solve(factor, data.targets_normalized, check_finite=False)
    if not np.all(np.isfinite(weights)):
        raise NumericalError("interpolation system is singular after regularization")
    return RbfModel(centers, weights, epsilon, regularization, data, factor)


def rbf_fit(data: Dataset, regularization: float = DEFAULT_REGULARIZATION) -> RbfModel:
    """Fit the interpolant; the spread is the median pairwise training distance."""
    if data.n < 2:
        raise InvalidInputError("need at least two training points")
    dist = pairwise_distances(data.points)
    offdiag = dist[np.triu_indices(data.n, k=1)]
    if np.any(offdiag == 0.0):
        raise InvalidInputError("training points must be distinct")
    epsilon = float(np.median(offdiag))
    return _solve(data, epsilon, regularization)
