"""Gaussian process regression with exact incremental conditioning.

Fitting maximizes the log marginal likelihood over kernel
hyperparameters (bounded quasi-Newton in log space, multi-restart).
Conditioning on a new observation appends one row to the stored
Cholesky factor and re-solves the triangular systems, so adding a
pseudo-observation costs O(n^2) and never touches the hyperparameters.

The predictive update realized by :meth:`GpPosterior.condition` is, for
every test point x,

    mean'(x) = mean(x) + w(x, x*) * (y_tilde - mean(x*))
    var'(x)  = var(x) - cov(x, x*)^2 / (var(x*) + noise)

with w(x, x*) = cov(x, x*) / (var(x*) + noise), where cov is the
posterior cross-covariance.  The variance update does not depend on
y_tilde at all, which is what makes every lie strategy share the same
suppression geometry.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .core import Dataset, InvalidInputError, NumericalError, RngStream, as_point
from .kernels import (
    DEFAULT_NOISE_VARIANCE,
    LENGTHSCALE_BOUNDS,
    SIGNAL_VARIANCE_BOUNDS,
    KernelFamily,
    KernelParams,
    cholesky_with_jitter,
    kernel_cross,
    kernel_eval,
    kernel_matrix,
    kernel_vector,
)

__all__ = ["PosteriorMoments", "GpPosterior", "build_posterior", "fit"]

_LOG2PI = math.log(2.0 * math.pi)
_FD_LOG_STEP = 1e-5  # central-difference step in log-hyperparameter space


@dataclass(frozen=True)
class PosteriorMoments:
    """Predictive mean and variance in normalized target units."""

    mean: float
    variance: float


@dataclass(frozen=True, eq=False)
class GpPosterior:
    """Fitted GP state: hyperparameters, Cholesky factor, dual weights.

    The mean function is constant zero in normalized target space.
    Instances are immutable; :meth:`condition` returns a new value.
    """

    params: KernelParams
    noise_variance: float
    data: Dataset
    chol: np.ndarray  # lower-triangular L with L L^T = K + noise * I
    alpha: np.ndarray  # solves (K + noise * I) alpha = y_normalized

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def dim(self) -> int:
        return self.data.dim

    @property
    def targets(self) -> np.ndarray:
        """Normalized targets, including any conditioned pseudo-observations."""
        return self.data.targets_normalized

    def predict(self, x) -> PosteriorMoments:
        """Posterior mean and variance at one point (normalized target units)."""
        p = as_point(x, self.dim)
        k_star = kernel_vector(self.params, self.data.points, p)
        v = solve_triangular(self.chol, k_star, lower=True, check_finite=False)
        mean = float(k_star @ self.alpha)
        var = float(self.params.signal_variance - v @ v)
        return PosteriorMoments(mean, max(var, 0.0))

    def predict_batch(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`predict` over the rows of ``X``."""
        K_star = kernel_cross(self.params, self.data.points, np.atleast_2d(X))
        V = solve_triangular(self.chol, K_star, lower=True, check_finite=False)
        means = K_star.T @ self.alpha
        variances = np.maximum(self.params.signal_variance - np.sum(V * V, axis=0), 0.0)
        return means, variances

    def posterior_cov(self, x, x2) -> float:
        """Posterior cross-covariance between two test points."""
        a = as_point(x, self.dim)
        b = as_point(x2, self.dim)
        ka = kernel_vector(self.params, self.data.points, a)
        kb = kernel_vector(self.params, self.data.points, b)
        va = solve_triangular(self.chol, ka, lower=True, check_finite=False)
        vb = solve_triangular(self.chol, kb, lower=True, check_finite=False)
        return float(kernel_eval(self.params, a, b) - va @ vb)

    def condition(self, x_star, y_tilde: float) -> "GpPosterior":
        """Posterior after appending the observation ``(x_star, y_tilde)``.

        ``y_tilde`` is in normalized target space.  Hyperparameters and
        normalization metadata stay frozen; only the Cholesky factor
        grows by one row.
        """
        p = as_point(x_star, self.dim)
        if not np.isfinite(y_tilde):
            raise InvalidInputError("pseudo-observation value must be finite")
        k_star = kernel_vector(self.params, self.data.points, p)
        l12 = solve_triangular(self.chol, k_star, lower=True, check_finite=False)
        diag = self.params.signal_variance + self.noise_variance - float(l12 @ l12)
        if diag <= 0.0:
            # Escalate jitter on the new diagonal entry only.
            jitter = 1e-10
            attempted = []
            while diag + jitter <= 0.0 and jitter <= 1e-4:
                attempted.append(jitter)
                jitter *= 10.0
            if diag + jitter <= 0.0:
                raise NumericalError(
                    "cannot extend Cholesky factor: new pivot not positive",
                    jitter_levels=tuple(attempted),
                )
            diag += jitter
        n = self.n
        chol_new = np.zeros((n + 1, n + 1))
        chol_new[:n, :n] = self.chol
        chol_new[n, :n] = l12
        chol_new[n, n] = math.sqrt(diag)
        data_new = self.data.with_observation(p, self.data.denormalize(float(y_tilde)))
        y_norm = data_new.targets_normalized
        z = solve_triangular(chol_new, y_norm, lower=True, check_finite=False)
        alpha_new = solve_triangular(chol_new.T, z, lower=False, check_finite=False)
        return GpPosterior(self.params, self.noise_variance, data_new, chol_new, alpha_new)

    def fantasy_value(self, x_star, rng: RngStream) -> float:
        """Sample a plausible observation at ``x_star`` from the posterior predictive."""
        m = self.predict(x_star)
        scale = math.sqrt(max(m.variance + self.noise_variance, 0.0))
        if scale == 0.0:
            return m.mean
        return m.mean + scale * float(rng.generator.standard_normal())

    @property
    def log_marginal_likelihood(self) -> float:
        y = self.targets
        return float(
            -0.5 * y @ self.alpha
            - np.sum(np.log(np.diag(self.chol)))
            - 0.5 * self.n * _LOG2PI
        )


def build_posterior(
    params: KernelParams,
    data: Dataset,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
) -> GpPosterior:
    """Factorize the covariance and solve for the dual weights at fixed hyperparameters."""
    K = kernel_matrix(params, data.points, noise_variance)
    L, _ = cholesky_with_jitter(K)
    y = data.targets_normalized
    z = solve_triangular(L, y, lower=True, check_finite=False)
    alpha = solve_triangular(L.T, z, lower=False, check_finite=False)
    return GpPosterior(params, noise_variance, data, L, alpha)


def _make_neg_lml(X: np.ndarray, y: np.ndarray, family: KernelFamily,
                  noise_variance: float):
    """Closures for the negative log marginal likelihood and its FD gradient.

    The per-dimension squared differences are precomputed once, so each
    evaluation is one weighted contraction plus a Cholesky.
    """
    n = y.size
    diff = X[:, None, :] - X[None, :, :]
    sqdiff = diff * diff  # (n, n, d)
    noise_eye = noise_variance * np.eye(n)
    sqrt5 = math.sqrt(5.0)

    def neg_lml(theta: np.ndarray) -> float:
        sv = math.exp(theta[0])
        inv_ls2 = np.exp(-2.0 * theta[1:])
        r2 = sqdiff @ inv_ls2
        if family is KernelFamily.SQUARED_EXPONENTIAL:
            K = sv * np.exp(-0.5 * r2)
        else:
            r = np.sqrt(np.maximum(r2, 0.0))
            K = sv * (1.0 + sqrt5 * r + (5.0 / 3.0) * r2) * np.exp(-sqrt5 * r)
        try:
            L = np.linalg.cholesky(K + noise_eye)
        except np.linalg.LinAlgError:
            return 1e25
        z = solve_triangular(L, y, lower=True, check_finite=False)
        lml = -0.5 * z @ z - np.sum(np.log(np.diag(L))) - 0.5 * n * _LOG2PI
        if not np.isfinite(lml):
            return 1e25
        return float(-lml)

    def neg_lml_grad(theta: np.ndarray) -> np.ndarray:
        grad = np.empty_like(theta)
        for i in range(theta.size):
            up = theta.copy()
            dn = theta.copy()
            up[i] += _FD_LOG_STEP
            dn[i] -= _FD_LOG_STEP
            grad[i] = (neg_lml(up) - neg_lml(dn)) / (2.0 * _FD_LOG_STEP)
        return grad

    return neg_lml, neg_lml_grad


def fit(
    data: Dataset,
    restarts: int = 5,
    rng: RngStream | None = None,
    family: KernelFamily = KernelFamily.MATERN52,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
) -> GpPosterior:
    """Maximize the log marginal likelihood with multi-restart bounded quasi-Newton.

    The first restart starts from unit signal variance and unit
    lengthscales; the rest start log-uniform within the fitting bounds,
    drawn from a labelled substream of ``rng``.  The noise variance is
    held fixed throughout.  Returns the posterior at the best restart.
    """
    if data.n < 2:
        raise InvalidInputError("fitting needs at least two observations")
    if restarts < 1:
        raise InvalidInputError("need at least one restart")
    if rng is None:
        rng = RngStream(0)
    X = data.points
    y = data.targets_normalized
    d = data.dim
    lo = np.log(np.array([SIGNAL_VARIANCE_BOUNDS[0]] + [LENGTHSCALE_BOUNDS[0]] * d))
    hi = np.log(np.array([SIGNAL_VARIANCE_BOUNDS[1]] + [LENGTHSCALE_BOUNDS[1]] * d))
    init_gen = rng.substream("hyper-init").generator

    starts = [np.zeros(d + 1)]  # log(1) = 0 for all hyperparameters
    for _ in range(restarts - 1):
        starts.append(init_gen.uniform(lo, hi))

    neg_lml, neg_lml_grad = _make_neg_lml(X, y, family, noise_variance)
    best_theta = None
    best_val = np.inf
    for theta0 in starts:
        res = minimize(
            neg_lml,
            theta0,
            jac=neg_lml_grad,
            method="L-BFGS-B",
            bounds=list(zip(lo, hi)),
            options={"maxiter": 100, "ftol": 1e-10, "gtol": 1e-6},
        )
        val = neg_lml(res.x)
        if np.isfinite(val) and val < 1e24 and val < best_val:
            best_val = val
            best_theta = res.x
    if best_theta is None:
        raise NumericalError("all marginal-likelihood restarts failed")
    # Clip in value space: exp/log round-tripping can land an ulp outside.
    sv = float(np.clip(math.exp(best_theta[0]), *SIGNAL_VARIANCE_BOUNDS))
    ls = np.clip(np.exp(best_theta[1:]), *LENGTHSCALE_BOUNDS)
    return build_posterior(KernelParams(sv, ls, family), data, noise_variance)
