"""Greedy batch construction via pseudo-observations, plus LP and random baselines.

The main loop selects q points one at a time: maximize the acquisition
on the current model, record the point, attach a lie value to it
(constant-liar statistics come from the real observations only; the
believer/fantasy values come from the current model), condition the
model on the pseudo-observation, and repeat.  Surrogate hyperparameters
stay frozen throughout; the input model is never mutated.

Any surrogate exposing ``predict(x) -> PosteriorMoments``,
``condition(x, y) -> new model`` and a normalized ``targets`` vector
can drive the loop.  Parametric models participate through the
adapters below, which bind their retrain/rebuild flag and RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .acquisition import (
    AcqSpec,
    LpPenalty,
    acq_value,
    acq_values,
    lp_penalty_factor,
    lp_penalty_factors,
)
from .acq_optim import StartSet, materialize_starts, maximize_acq
from .core import Bounds, Dataset, InvalidInputError, RngStream
from .gp import GpPosterior, PosteriorMoments
from .parametric import ForestModel, NnEnsemble, forest_condition, nn_condition

__all__ = [
    "LIE_STRATEGIES",
    "ConditioningSurrogate",
    "NnSurrogate",
    "ForestSurrogate",
    "BatchResult",
    "select_batch",
    "select_batch_lp",
    "select_batch_random",
]

LIE_STRATEGIES = ("cl-min", "cl-max", "cl-mean", "kb", "fantasy")


class ConditioningSurrogate(Protocol):
    def predict(self, x) -> PosteriorMoments: ...

    def condition(self, x, y_tilde: float) -> "ConditioningSurrogate": ...

    @property
    def targets(self) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class NnSurrogate:
    """Network ensemble bound to its conditioning policy for the batch loop."""

    model: NnEnsemble
    retrain: bool = False
    rng: RngStream | None = None

    def predict(self, x) -> PosteriorMoments:
        return self.model.predict(x)

    def predict_batch(self, X):
        return self.model.predict_batch(X)

    @property
    def targets(self) -> np.ndarray:
        return self.model.targets

    def condition(self, x, y_tilde: float) -> "NnSurrogate":
        new = nn_condition(self.model, x, y_tilde, retrain=self.retrain, rng=self.rng)
        return NnSurrogate(new, self.retrain, self.rng)


@dataclass(frozen=True, eq=False)
class ForestSurrogate:
    """Random forest bound to its conditioning policy for the batch loop."""

    model: ForestModel
    rebuild: bool = False
    rng: RngStream | None = None

    def predict(self, x) -> PosteriorMoments:
        return self.model.predict(x)

    def predict_batch(self, X):
        return self.model.predict_batch(X)

    @property
    def targets(self) -> np.ndarray:
        return self.model.targets

    def condition(self, x, y_tilde: float) -> "ForestSurrogate":
        new = forest_condition(self.model, x, y_tilde, rebuild=self.rebuild, rng=self.rng)
        return ForestSurrogate(new, self.rebuild, self.rng)


@dataclass(frozen=True, eq=False)
class BatchResult:
    """Ordered batch with per-step acquisition metadata.

    ``lies`` holds normalized pseudo-observation values and is empty
    for strategies that do not condition (LP, random).  The sigma
    arrays record the predictive standard deviation at each selected
    point immediately before and after conditioning on it.
    """

    points: np.ndarray  # (q, d)
    lies: np.ndarray
    acq_values: np.ndarray
    sigma_before: np.ndarray
    sigma_after: np.ndarray

    @property
    def q(self) -> int:
        return self.points.shape[0]


def _fantasy_from(model, x, rng: RngStream) -> float:
    """Posterior-predictive draw; falls back to the moments for models without one."""
    if hasattr(model, "fantasy_value"):
        return float(model.fantasy_value(x, rng))
    m = model.predict(x)
    noise = getattr(model, "noise_variance", 0.0)
    scale = math.sqrt(max(m.variance + noise, 0.0))
    return float(m.mean + scale * rng.generator.standard_normal())


def select_batch(
    surrogate: ConditioningSurrogate,
    data: Dataset,
    q: int,
    lie: str,
    spec: AcqSpec,
    bounds: Bounds,
    starts: StartSet,
    rng: RngStream,
) -> BatchResult:
    """Select a batch of ``q`` points by sequential conditioning.

    Constant-liar values are computed once from the real observations
    in ``data`` (normalized), never from earlier pseudo-observations.
    The incumbent driving EI/PI is the best value in the *current*
    model's target vector, so believed values participate once
    conditioned in.
    """
    if q < 1:
        raise InvalidInputError("batch size must be >= 1")
    if lie not in LIE_STRATEGIES:
        raise InvalidInputError(f"unknown lie strategy {lie!r}; options: {LIE_STRATEGIES}")
    y_real = data.targets_normalized
    cl_value = {
        "cl-min": float(np.min(y_real)),
        "cl-max": float(np.max(y_real)),
        "cl-mean": float(np.mean(y_real)),
    }
    model = surrogate
    points, lies, acq_vals, sig_before, sig_after = [], [], [], [], []
    for j in range(q):
        f_best = float(np.min(model.targets))

        def objective(x, _model=model, _f=f_best):
            return acq_value(spec, _model.predict(x), _f)

        objective_batch = None
        if hasattr(model, "predict_batch"):

            def objective_batch(X, _model=model, _f=f_best):
                means, variances = _model.predict_batch(X)
                return acq_values(spec, means, variances, _f)

        res = maximize_acq(objective, bounds, starts, rng.substream(f"acq-starts-{j}"),
                           objective_batch=objective_batch)
        x_j = res.point
        m_j = model.predict(x_j)
        points.append(x_j)
        acq_vals.append(res.value)
        sig_before.append(math.sqrt(max(m_j.variance, 0.0)))
        if lie in cl_value:
            y_tilde = cl_value[lie]
        elif lie == "kb":
            y_tilde = m_j.mean
        else:
            y_tilde = _fantasy_from(model, x_j, rng.substream(f"fantasy-{j}"))
        model = model.condition(x_j, y_tilde)
        lies.append(y_tilde)
        sig_after.append(math.sqrt(max(model.predict(x_j).variance, 0.0)))
    return BatchResult(
        np.array(points),
        np.array(lies),
        np.array(acq_vals),
        np.array(sig_before),
        np.array(sig_after),
    )


def select_batch_lp(
    g: GpPosterior,
    data: Dataset,
    q: int,
    spec: AcqSpec,
    bounds: Bounds,
    starts: StartSet,
    rng: RngStream | None = None,
) -> BatchResult:
    """Greedy batch via explicit local penalization; the model is never conditioned.

    The penalty lengthscale is the geometric mean of the fitted ARD
    lengthscales.  The base acquisition must be nonnegative for the
    product to make sense: EI/PI already are; the confidence bound is
    shifted by its minimum over the start points and clamped at zero.
    """
    if q < 1:
        raise InvalidInputError("batch size must be >= 1")
    ell = float(np.exp(np.mean(np.log(g.params.lengthscales))))
    f_best = float(np.min(g.targets))

    def raw(x):
        return acq_value(spec, g.predict(x), f_best)

    shift = 0.0
    if spec.kind == "ucb":
        start_pts = materialize_starts(starts, bounds, rng)
        shift = min(raw(p) for p in np.atleast_2d(start_pts))

    anchors: list[np.ndarray] = []
    points, acq_vals, sigmas = [], [], []
    for j in range(q):
        pen = LpPenalty(np.array(anchors) if anchors else np.empty((0, bounds.dim)), ell)

        def objective(x, _pen=pen):
            return max(raw(x) - shift, 0.0) * lp_penalty_factor(_pen, x)

        def objective_batch(X, _pen=pen):
            means, variances = g.predict_batch(X)
            base = np.maximum(acq_values(spec, means, variances, f_best) - shift, 0.0)
            return base * lp_penalty_factors(_pen, X)

        res = maximize_acq(objective, bounds, starts,
                           rng.substream(f"acq-starts-{j}") if rng is not None else None,
                           objective_batch=objective_batch)
        points.append(res.point)
        acq_vals.append(res.value)
        sigmas.append(math.sqrt(max(g.predict(res.point).variance, 0.0)))
        anchors.append(res.point)
    sig = np.array(sigmas)
    return BatchResult(np.array(points), np.array([]), np.array(acq_vals), sig, sig.copy())


def select_batch_random(bounds: Bounds, q: int, rng: RngStream) -> BatchResult:
    """Uniform points in the box; the baseline with no model at all."""
    if q < 1:
        raise InvalidInputError("batch size must be >= 1")
    u = rng.generator.uniform(size=(q, bounds.dim))
    pts = bounds.lower + u * bounds.span
    empty = np.array([])
    nan = np.full(q, np.nan)
    return BatchResult(pts, empty, nan.copy(), nan.copy(), nan.copy())
