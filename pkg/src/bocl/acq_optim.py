"""Box-constrained multi-start maximization of acquisition objectives.

A bounded quasi-Newton local search (L-BFGS-B with central-difference
gradients) runs from every start point; the best local optimum wins,
with exact-value ties broken by lowest start index so the result is a
deterministic function of the starts and the objective.  The
fixed-diagonal start mode keeps the same three points across all batch
steps, which is what lets the diversity diagnostic attribute any batch
spread to the surrogate rather than to optimizer randomness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize

from .core import Bounds, InvalidInputError, RngStream, clip_to_bounds, latin_hypercube

__all__ = [
    "StartSet",
    "AcqOptResult",
    "fixed_starts",
    "lhs_starts",
    "provided_starts",
    "materialize_starts",
    "maximize_acq",
]

FIXED_DIAGONAL_FRACTIONS = (0.2, 0.5, 0.8)
_FD_STEP_FRACTION = 1e-6  # gradient step relative to box width
_MAX_ITER = 200
_GRAD_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class StartSet:
    """Start points for the multi-start search.

    ``points`` is None for the lhs mode until materialized (a fresh
    design is drawn per call when an RNG is supplied); fixed-diagonal
    and provided modes always carry their points.
    """

    mode: str  # "fixed-diagonal" | "lhs" | "provided"
    count: int
    points: np.ndarray | None = None


def fixed_starts(bounds: Bounds) -> StartSet:
    """The three deterministic diagonal starts at fractions 0.2, 0.5, 0.8 of the box."""
    pts = np.stack([bounds.from_unit(np.full(bounds.dim, f)) for f in FIXED_DIAGONAL_FRACTIONS])
    return StartSet("fixed-diagonal", len(FIXED_DIAGONAL_FRACTIONS), pts)


def lhs_starts(bounds: Bounds, count: int, rng: RngStream | None = None) -> StartSet:
    """Latin-hypercube starts; materialized now if ``rng`` is given, else per call."""
    if count < 1:
        raise InvalidInputError("need at least one start")
    pts = latin_hypercube(bounds, count, rng) if rng is not None else None
    return StartSet("lhs", count, pts)


def provided_starts(points) -> StartSet:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return StartSet("provided", pts.shape[0], pts)


@dataclass(frozen=True, eq=False)
class AcqOptResult:
    point: np.ndarray
    value: float
    degraded: bool  # no start converged; the best raw start was returned


def materialize_starts(starts: StartSet, bounds: Bounds, rng: RngStream | None) -> np.ndarray:
    """Concrete start points for one search; fresh LHS designs are drawn from ``rng``."""
    if starts.points is not None:
        return starts.points
    if starts.mode == "fixed-diagonal":
        return fixed_starts(bounds).points
    if starts.mode == "lhs":
        if rng is None:
            raise InvalidInputError("lhs starts need an rng to materialize")
        return latin_hypercube(bounds, starts.count, rng)
    raise InvalidInputError(f"start set of mode {starts.mode!r} has no points")


def maximize_acq(
    objective: Callable[[np.ndarray], float],
    bounds: Bounds,
    starts: StartSet,
    rng: RngStream | None = None,
    objective_batch: Callable[[np.ndarray], np.ndarray] | None = None,
) -> AcqOptResult:
    """Maximize ``objective`` over the box from every start; return the best optimum.

    The returned value is never below the objective at any start, and
    the returned point always lies inside the bounds.  When
    ``objective_batch`` (rows of points -> vector of values) is given,
    the central-difference gradient evaluates all perturbations in one
    call, which is much cheaper for surrogate-backed objectives.
    """
    start_pts = np.atleast_2d(materialize_starts(starts, bounds, rng))
    if start_pts.shape[0] < 1:
        raise InvalidInputError("need at least one start point")
    span = bounds.span
    fd_step = _FD_STEP_FRACTION * span

    def neg(x: np.ndarray) -> float:
        return -float(objective(x))

    if objective_batch is None:

        def neg_grad(x: np.ndarray) -> np.ndarray:
            g = np.empty_like(x)
            for i in range(x.size):
                up = x.copy()
                dn = x.copy()
                up[i] += fd_step[i]
                dn[i] -= fd_step[i]
                g[i] = (neg(up) - neg(dn)) / (2.0 * fd_step[i])
            return g

    else:

        def neg_grad(x: np.ndarray) -> np.ndarray:
            d = x.size
            perturbed = np.repeat(x[None, :], 2 * d, axis=0)
            idx = np.arange(d)
            perturbed[idx, idx] += fd_step
            perturbed[d + idx, idx] -= fd_step
            vals = -np.asarray(objective_batch(perturbed), dtype=float)
            return (vals[:d] - vals[d:]) / (2.0 * fd_step)

    best_point: np.ndarray | None = None
    best_value = -np.inf
    any_converged = False
    for x0 in start_pts:
        x0 = clip_to_bounds(x0, bounds)
        f0 = float(objective(x0))
        cand_point, cand_value = x0, f0
        res = minimize(
            neg,
            x0,
            jac=neg_grad,
            method="L-BFGS-B",
            bounds=bounds.pairs(),
            options={"maxiter": _MAX_ITER, "gtol": _GRAD_TOL, "ftol": 1e-12},
        )
        if np.all(np.isfinite(res.x)):
            x_opt = clip_to_bounds(res.x, bounds)
            f_opt = float(objective(x_opt))
            if f_opt >= f0:
                cand_point, cand_value = x_opt, f_opt
                any_converged = True
        if cand_value > best_value:
            best_value = cand_value
            best_point = cand_point
    return AcqOptResult(best_point, best_value, degraded=not any_converged)
