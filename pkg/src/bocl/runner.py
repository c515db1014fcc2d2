"""Full optimization loops, multi-seed orchestration, paired statistics, timing.

A run starts from a Latin-hypercube design of ``n_init`` points, then
repeatedly refits the GP on all real observations (hyperparameters are
re-optimized between batches, frozen within one), selects a batch by
the chosen strategy, and evaluates it.  ``budget`` counts acquired
evaluations (the initial design is extra); the final batch shrinks so
the budget is hit exactly.

For noisy runs the observation noise level is fixed once, as
``noise_scale`` times the population std of the clean initial targets,
and applied to every recorded observation including the initial design.
Traces track the best *observed* value; the clean values are logged
alongside for analysis.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import gp
from .acquisition import AcqSpec, norm_cdf
from .acq_optim import StartSet
from .batch import select_batch, select_batch_lp, select_batch_random
from .bench import Benchmark, get_benchmark, lhs_init
from .core import (
    Bounds,
    Dataset,
    InvalidInputError,
    RngStream,
    UndefinedResultError,
    latin_hypercube,
    pairwise_distances,
)
from .mq_rbf import rbf_fit
from .parametric import forest_condition, forest_fit, nn_condition, nn_fit

__all__ = [
    "STRATEGIES",
    "BoTrace",
    "WilcoxonResult",
    "run_bo",
    "run_bo_suite",
    "final_values",
    "mean_batch_diversity",
    "summarize_suite",
    "wilcoxon_signed_rank",
    "timing_harness",
]

STRATEGIES = (
    "cl-min", "cl-max", "cl-mean", "kb", "fantasy", "lp", "random-batch", "sequential",
)

EXACT_WILCOXON_MAX_N = 12
DEFAULT_ACQ_RESTARTS = 10


@dataclass(frozen=True, eq=False)
class BoTrace:
    """One optimization run: every evaluation plus per-iteration metadata."""

    benchmark: str
    strategy: str
    seed: int
    q: int
    noise_sigma: float
    init_points: np.ndarray
    init_y_observed: np.ndarray
    init_y_true: np.ndarray
    points: np.ndarray  # acquired evaluations, (m, d)
    y_observed: np.ndarray
    y_true: np.ndarray
    best_so_far: np.ndarray  # after each acquired evaluation, incl. init prefix
    batch_diversity: np.ndarray  # mean pairwise distance per iteration
    iteration_of_eval: np.ndarray  # iteration index per acquired evaluation
    wall_clock_per_iter: np.ndarray

    @property
    def final_best(self) -> float:
        return float(self.best_so_far[-1])


def run_bo(
    benchmark: Benchmark | str,
    strategy: str,
    q: int,
    budget: int,
    n_init: int,
    noise_scale: float,
    seed: int,
    acquisition: str = "ei",
    fit_restarts: int = 5,
    acq_restarts: int = DEFAULT_ACQ_RESTARTS,
) -> BoTrace:
    """Run one seeded optimization loop and return its trace."""
    b = get_benchmark(benchmark) if isinstance(benchmark, str) else benchmark
    if strategy not in STRATEGIES:
        raise InvalidInputError(f"unknown strategy {strategy!r}; options: {STRATEGIES}")
    if strategy == "sequential":
        q = 1
    if q < 1 or budget < q:
        raise InvalidInputError("need q >= 1 and budget >= q")
    if n_init < b.dim + 2:
        raise InvalidInputError("n_init must be at least dim + 2")
    if noise_scale < 0:
        raise InvalidInputError("noise_scale must be >= 0")

    rng = RngStream(seed)
    spec = AcqSpec(acquisition)
    init = lhs_init(b, n_init, rng.substream("lhs"))
    sigma = float(noise_scale * np.std(init.targets))
    noise_gen = rng.substream("noise").generator

    def observe(y_clean: float) -> float:
        if sigma == 0.0:
            return y_clean
        return y_clean + sigma * float(noise_gen.standard_normal())

    init_y_true = init.targets.copy()
    init_y_obs = np.array([observe(y) for y in init_y_true])

    X = [p for p in init.points]
    y_obs = list(init_y_obs)
    y_true = list(init_y_true)

    acq_points: list[np.ndarray] = []
    acq_obs: list[float] = []
    acq_true: list[float] = []
    best_so_far: list[float] = []
    diversity: list[float] = []
    iter_of_eval: list[int] = []
    wall_clock: list[float] = []

    best = float(np.min(init_y_obs))
    iteration = 0
    evaluated = 0
    while evaluated < budget:
        t0 = time.perf_counter()
        q_eff = min(q, budget - evaluated)
        dataset = Dataset.from_observations(np.array(X), np.array(y_obs))
        batch_rng = rng.substream(f"batch-{iteration}")
        if strategy == "random-batch":
            result = select_batch_random(b.bounds, q_eff, batch_rng)
        else:
            g = gp.fit(dataset, restarts=fit_restarts, rng=rng.substream(f"fit-{iteration}"))
            starts = StartSet("lhs", acq_restarts, None)
            if strategy == "lp":
                result = select_batch_lp(g, dataset, q_eff, spec, b.bounds, starts, batch_rng)
            else:
                lie = "kb" if strategy == "sequential" else strategy
                result = select_batch(g, dataset, q_eff, lie, spec, b.bounds, starts, batch_rng)
        for x_new in result.points:
            y_clean = b.fn(np.clip(x_new, b.bounds.lower, b.bounds.upper))
            y_noisy = observe(y_clean)
            X.append(x_new)
            y_obs.append(y_noisy)
            y_true.append(y_clean)
            acq_points.append(x_new)
            acq_obs.append(y_noisy)
            acq_true.append(y_clean)
            best = min(best, y_noisy)
            best_so_far.append(best)
            iter_of_eval.append(iteration)
            evaluated += 1
        if q_eff >= 2:
            d = pairwise_distances(result.points)
            diversity.append(float(np.mean(d[np.triu_indices(q_eff, k=1)])))
        else:
            diversity.append(0.0)
        wall_clock.append(time.perf_counter() - t0)
        iteration += 1

    return BoTrace(
        benchmark=b.name,
        strategy=strategy,
        seed=seed,
        q=q,
        noise_sigma=sigma,
        init_points=init.points,
        init_y_observed=init_y_obs,
        init_y_true=init_y_true,
        points=np.array(acq_points),
        y_observed=np.array(acq_obs),
        y_true=np.array(acq_true),
        best_so_far=np.array(best_so_far),
        batch_diversity=np.array(diversity),
        iteration_of_eval=np.array(iter_of_eval),
        wall_clock_per_iter=np.array(wall_clock),
    )


def _run_bo_task(kwargs: dict) -> BoTrace:
    return run_bo(**kwargs)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("BOCL_THREADS", "1")))
    except ValueError:
        return 1


def run_bo_suite(
    benchmark: str,
    strategy: str,
    q: int,
    budget: int,
    n_init: int,
    noise_scale: float,
    seeds,
    acquisition: str = "ei",
    workers: int | None = None,
) -> list[BoTrace]:
    """One trace per seed, in seed order; fans out to workers when configured."""
    tasks = [
        dict(
            benchmark=benchmark, strategy=strategy, q=q, budget=budget,
            n_init=n_init, noise_scale=noise_scale, seed=int(s), acquisition=acquisition,
        )
        for s in seeds
    ]
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(tasks) <= 1:
        return [_run_bo_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_bo_task, tasks))


def final_values(traces) -> np.ndarray:
    return np.array([t.final_best for t in traces])


def mean_batch_diversity(trace: BoTrace) -> float:
    """Average over iterations that actually selected a multi-point batch."""
    mask = trace.batch_diversity > 0
    if not np.any(mask):
        return 0.0
    return float(np.mean(trace.batch_diversity[mask]))


def summarize_suite(traces) -> dict:
    finals = final_values(traces)
    return {
        "n_seeds": len(traces),
        "final_best_mean": float(np.mean(finals)),
        "final_best_std": float(np.std(finals)),
        "final_best_per_seed": [float(v) for v in finals],
        "mean_batch_diversity": float(np.mean([mean_batch_diversity(t) for t in traces])),
    }


# ---------------------------------------------------------------------------
# Wilcoxon signed-rank test
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WilcoxonResult:
    statistic: float  # min of the positive/negative rank sums
    p_value: float
    n_pairs: int  # pairs remaining after zero differences are dropped


def _exact_signed_rank_p(ranks: np.ndarray, w_small: float) -> float:
    """Two-sided tail probability of the signed-rank sum by exact counting.

    Average ranks can be half-integers, so everything is doubled to
    stay on an integer lattice; the distribution of the positive-rank
    sum over all sign assignments is built by convolution.
    """
    doubled = np.rint(2.0 * ranks).astype(int)
    total = int(np.sum(doubled))
    counts = np.zeros(total + 1, dtype=float)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: counts.size - r]
        counts = counts + shifted
    counts /= counts.sum()
    w2 = int(round(2.0 * w_small))
    lower = float(np.sum(counts[: w2 + 1]))
    upper = float(np.sum(counts[total - w2:]))
    return min(1.0, lower + upper)


def wilcoxon_signed_rank(a, b) -> WilcoxonResult:
    """Two-sided paired test; exact distribution up to n=12 pairs, normal approx above.

    Zero differences are dropped; tied absolute differences get average
    ranks.  The statistic is the smaller of the positive and negative
    rank sums.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape or x.ndim != 1 or x.size < 5:
        raise InvalidInputError("need two equal-length 1-D samples with at least 5 pairs")
    diffs = x - y
    diffs = diffs[diffs != 0.0]
    n = diffs.size
    if n == 0:
        raise UndefinedResultError("all paired differences are zero; test undefined")
    ranks = rankdata(np.abs(diffs))
    w_plus = float(np.sum(ranks[diffs > 0]))
    w_minus = float(np.sum(ranks[diffs < 0]))
    w = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        p = _exact_signed_rank_p(ranks, w)
    else:
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0
        _, tie_counts = np.unique(ranks, return_counts=True)
        var -= float(np.sum(tie_counts**3 - tie_counts)) / 48.0
        z = (w - mu + 0.5) / math.sqrt(var)
        p = min(1.0, 2.0 * float(norm_cdf(z)))
    return WilcoxonResult(statistic=w, p_value=p, n_pairs=n)


# ---------------------------------------------------------------------------
# Conditioning vs retraining wall-clock harness
# ---------------------------------------------------------------------------


def _timing_objective(x: np.ndarray) -> float:
    return float(np.sum(np.sin(3.0 * x) * np.arange(1, x.size + 1)) / x.size)


def timing_harness(
    n: int = 50, d: int = 6, q: int = 3, repeats: int = 5, seed: int = 0
) -> dict[str, dict]:
    """Median per-step seconds for each surrogate's conditioning/refresh path.

    Times one conditioning step per surrogate on a shared synthetic
    dataset of ``n`` points in ``d`` dimensions: the GP's rank-one
    update, the interpolant's linear re-solve, a full ensemble retrain,
    and a full forest rebuild.
    """
    if repeats < 3:
        raise InvalidInputError("need at least 3 repeats for a stable median")
    rng = RngStream(seed)
    bounds = Bounds.cube(0.0, 1.0, d)
    pts = latin_hypercube(bounds, n, rng.substream("design"))
    ys = np.array([_timing_objective(p) for p in pts])
    data = Dataset.from_observations(pts, ys)

    g = gp.fit(data, restarts=3, rng=rng.substream("gp-fit"))
    rbf = rbf_fit(data)
    nn = nn_fit(data, rng.substream("nn-fit"))
    rf = forest_fit(data, rng.substream("rf-fit"))

    probe_gen = rng.substream("probes").generator
    probes = probe_gen.uniform(0.0, 1.0, size=(repeats, d))
    retrain_rng = rng.substream("retrain")

    samples: dict[str, list[float]] = {k: [] for k in
                                       ("gp-condition", "mq-rbf-resolve",
                                        "nn-retrain", "rf-rebuild")}
    for x_star in probes:
        y_tilde = g.predict(x_star).mean

        t0 = time.perf_counter()
        g.condition(x_star, y_tilde)
        samples["gp-condition"].append(time.perf_counter() - t0)

        t0 = time.perf_counter()
        rbf.condition(x_star, y_tilde)
        samples["mq-rbf-resolve"].append(time.perf_counter() - t0)

        t0 = time.perf_counter()
        nn_condition(nn, x_star, y_tilde, retrain=True, rng=retrain_rng)
        samples["nn-retrain"].append(time.perf_counter() - t0)

        t0 = time.perf_counter()
        forest_condition(rf, x_star, y_tilde, rebuild=True, rng=retrain_rng)
        samples["rf-rebuild"].append(time.perf_counter() - t0)

    return {
        mode: {
            "median_seconds": float(np.median(vals)),
            "samples": [float(v) for v in vals],
            "n": n, "d": d, "q": q,
        }
        for mode, vals in samples.items()
    }
