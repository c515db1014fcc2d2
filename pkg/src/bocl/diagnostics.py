"""Structural diversity diagnostic, diversity metrics, and numerical theory checks.

The diversity diagnostic (SDD) runs batch selection with the three
fixed diagonal optimizer starts held identical across batch steps, so
any spread among the selected points must come from the surrogate's
response to conditioning.  A surrogate is classified diverse when the
minimum pairwise distance of its batch, measured in normalized input
space, exceeds ``DIVERSITY_THRESHOLD``; reported distances are in raw
benchmark units.

The check suite turns the toolkit's structural guarantees into
numerical pass/fail verdicts: conditioning equivalence against a
from-scratch refit, believer-lie mean invariance, lie-independent
variance geometry, the variance-suppression radius bound, batch
distinctness versus parametric degeneracy, and acquisition-choice
agnosticism.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import gp
from .acquisition import AcqSpec
from .acq_optim import fixed_starts
from .batch import ForestSurrogate, NnSurrogate, select_batch
from .bench import Benchmark, get_benchmark, lhs_init
from .core import (
    Bounds,
    Dataset,
    InvalidInputError,
    InvalidSetupError,
    RngStream,
    pairwise_distances,
)
from .kernels import KernelFamily, KernelParams
from .mq_rbf import rbf_fit
from .parametric import forest_fit, nn_fit

__all__ = [
    "DIVERSITY_THRESHOLD",
    "SURROGATE_KINDS",
    "SddReport",
    "RadiusCheck",
    "CheckResult",
    "run_sdd",
    "suppression_radius_check",
    "kb_invariance_check",
    "acq_agnosticism_check",
    "run_theory_checks",
]

DIVERSITY_THRESHOLD = 1e-6  # normalized input units

SURROGATE_KINDS = ("gp", "mq-rbf", "nn", "nn-retrained", "rf", "rf-rebuilt")


@dataclass(frozen=True, eq=False)
class SddReport:
    """Diversity verdict for one surrogate under the fixed-start diagnostic."""

    surrogate_name: str
    q: int
    seed: int
    acquisition: str
    min_dist: float  # raw benchmark units
    mean_dist: float
    diverse: bool
    per_member_min_dist: tuple  # min pairwise among the first k points, k = 2..q
    units: str = "raw"


@dataclass(frozen=True, eq=False)
class RadiusCheck:
    """Predicted vs measured variance-suppression radius at level ``tau``."""

    tau: float
    predicted_radius: float
    measured_radius: float
    passed: bool


@dataclass(frozen=True, eq=False)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _fit_surrogate(kind: str, data: Dataset, rng: RngStream):
    """Build the surrogate (with its conditioning policy bound) for the diagnostic."""
    if kind == "gp":
        return gp.fit(data, restarts=5, rng=rng.substream("gp-fit"))
    if kind == "mq-rbf":
        return rbf_fit(data)
    if kind in ("nn", "nn-retrained"):
        model = nn_fit(data, rng.substream("nn-fit"))
        return NnSurrogate(model, retrain=(kind == "nn-retrained"),
                           rng=rng.substream("nn-retrain"))
    if kind in ("rf", "rf-rebuilt"):
        model = forest_fit(data, rng.substream("rf-fit"))
        return ForestSurrogate(model, rebuild=(kind == "rf-rebuilt"),
                               rng=rng.substream("rf-rebuild"))
    raise InvalidInputError(f"unknown surrogate {kind!r}; options: {SURROGATE_KINDS}")


def batch_distance_stats(points: np.ndarray, bounds: Bounds) -> tuple[float, float, float]:
    """(min raw, mean raw, min normalized) over pairwise distances of a batch."""
    if points.shape[0] < 2:
        return 0.0, 0.0, 0.0
    raw = pairwise_distances(points)
    unit = pairwise_distances((points - bounds.lower) / bounds.span)
    iu = np.triu_indices(points.shape[0], k=1)
    return float(np.min(raw[iu])), float(np.mean(raw[iu])), float(np.min(unit[iu]))


def run_sdd(
    surrogate_kind: str,
    benchmark: Benchmark | str,
    n_init: int,
    q: int,
    seed: int,
    acquisition: str = "ei",
    lie: str = "cl-min",
) -> SddReport:
    """Fixed-start diversity diagnostic for one surrogate/benchmark/seed."""
    b = get_benchmark(benchmark) if isinstance(benchmark, str) else benchmark
    if n_init < b.dim + 2:
        raise InvalidInputError("n_init must be at least dim + 2")
    rng = RngStream(seed)
    data = lhs_init(b, n_init, rng.substream("lhs"))
    surrogate = _fit_surrogate(surrogate_kind, data, rng)
    spec = AcqSpec(acquisition)
    result = select_batch(
        surrogate, data, q, lie, spec, b.bounds, fixed_starts(b.bounds),
        rng.substream("batch"),
    )
    min_raw, mean_raw, min_unit = batch_distance_stats(result.points, b.bounds)
    per_member = tuple(
        batch_distance_stats(result.points[:k], b.bounds)[0] for k in range(2, q + 1)
    )
    return SddReport(
        surrogate_name=surrogate_kind,
        q=q,
        seed=seed,
        acquisition=acquisition,
        min_dist=min_raw,
        mean_dist=mean_raw,
        diverse=bool(min_unit > DIVERSITY_THRESHOLD),
        per_member_min_dist=per_member,
    )


# ---------------------------------------------------------------------------
# Variance-suppression radius
# ---------------------------------------------------------------------------


def prior_dominated_gp(
    ell: float,
    sigma_f2: float,
    sigma_n2: float,
    conditioning_point: float = 0.0,
    dummy_distance_lengthscales: float = 20.0,
) -> gp.GpPosterior:
    """1-D squared-exponential GP whose only datum sits far from the probe point.

    With the single training point ``dummy_distance_lengthscales``
    lengthscales away, the posterior variance at the probe point is
    within a whisper of the prior signal variance.
    """
    x_dummy = conditioning_point + dummy_distance_lengthscales * ell
    data = Dataset.from_observations(np.array([[x_dummy]]), np.array([0.0]))
    params = KernelParams(sigma_f2, np.array([ell]), KernelFamily.SQUARED_EXPONENTIAL)
    return gp.build_posterior(params, data, noise_variance=sigma_n2)


def predicted_suppression_radius(
    ell: float, sigma_f2: float, sigma_n2: float, var_at_point: float, tau: float
) -> float:
    """Closed-form lower bound on the radius of fractional variance reduction >= tau."""
    arg = sigma_f2**2 / (tau * var_at_point * (var_at_point + sigma_n2))
    if arg <= 1.0:
        return 0.0
    return ell * math.sqrt(math.log(arg))


def suppression_radius_check(
    ell: float,
    sigma_f2: float,
    sigma_n2: float,
    tau: float,
    tolerance_lengthscales: float = 1e-3,
    dummy_distance_lengthscales: float = 20.0,
) -> RadiusCheck:
    """Measure the suppression radius in the prior-dominated rig and compare to the bound.

    The measured radius is the largest distance from the conditioning
    point at which conditioning still removes at least a ``tau``
    fraction of the posterior variance, found by bisection along a ray.
    """
    if not (0.0 < tau < 1.0):
        raise InvalidInputError("tau must lie strictly between 0 and 1")
    g = prior_dominated_gp(ell, sigma_f2, sigma_n2,
                           dummy_distance_lengthscales=dummy_distance_lengthscales)
    x_star = np.array([0.0])
    var_star = g.predict(x_star).variance
    if var_star < 0.99 * sigma_f2:
        raise InvalidSetupError("rig is not prior-dominated: variance at the probe "
                                f"point is {var_star:.4g} < 0.99 * {sigma_f2:.4g}")
    predicted = predicted_suppression_radius(ell, sigma_f2, sigma_n2, var_star, tau)
    g_after = g.condition(x_star, 0.0)

    def fractional_reduction(r: float) -> float:
        x = np.array([r])
        v_before = g.predict(x).variance
        v_after = g_after.predict(x).variance
        return (v_before - v_after) / v_before

    # Bracket: reduction is ~1 at r = 0 and decays with distance.
    lo, hi = 0.0, ell
    while fractional_reduction(hi) >= tau:
        lo = hi
        hi *= 2.0
        if hi > 1e3 * ell:
            raise InvalidSetupError("suppression region failed to close")
    tol = 1e-6 * ell
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if fractional_reduction(mid) >= tau:
            lo = mid
        else:
            hi = mid
    measured = 0.5 * (lo + hi)
    passed = measured >= predicted - tolerance_lengthscales * ell
    return RadiusCheck(tau, predicted, measured, passed)


def kb_invariance_check(g: gp.GpPosterior, x_star, grid) -> float:
    """Sup-norm mean shift over ``grid`` after conditioning with the believed value."""
    pts = np.atleast_2d(np.asarray(grid, dtype=float))
    if pts.shape[0] == 0:
        raise InvalidInputError("grid must be non-empty")
    y_tilde = g.predict(x_star).mean
    g_after = g.condition(x_star, y_tilde)
    mean_before, _ = g.predict_batch(pts)
    mean_after, _ = g_after.predict_batch(pts)
    return float(np.max(np.abs(mean_after - mean_before)))


def acq_agnosticism_check(
    benchmark: Benchmark | str,
    q: int,
    surrogate_kinds=("gp", "mq-rbf", "nn", "rf"),
    n_init: int = 30,
    seed: int = 0,
) -> dict[str, tuple[SddReport, SddReport]]:
    """Paired diagnostics under EI and the confidence bound with identical seeds."""
    out = {}
    for kind in surrogate_kinds:
        ei = run_sdd(kind, benchmark, n_init, q, seed, acquisition="ei")
        ucb = run_sdd(kind, benchmark, n_init, q, seed, acquisition="ucb")
        out[kind] = (ei, ucb)
    return out


# ---------------------------------------------------------------------------
# Theory-check suite
# ---------------------------------------------------------------------------


def _random_gp_config(gen: np.random.Generator, d: int, n: int, family: KernelFamily):
    X = gen.uniform(0.0, 1.0, size=(n, d))
    y = gen.normal(size=n)
    data = Dataset.from_observations(X, y)
    params = KernelParams(
        float(gen.uniform(0.3, 3.0)),
        gen.uniform(0.2, 1.5, size=d),
        family,
    )
    return data, params


def conditioning_equivalence_error(
    seed: int = 0,
    n_configs: int = 10,
    grid_size: int = 100,
    family: KernelFamily = KernelFamily.MATERN52,
) -> float:
    """Max abs mean/variance gap between rank-one conditioning and full refit."""
    gen = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_configs):
        d = int(gen.choice([1, 2, 6]))
        n = int(gen.integers(5, 41))
        data, params = _random_gp_config(gen, d, n, family)
        g = gp.build_posterior(params, data)
        x_star = gen.uniform(0.0, 1.0, size=d)
        y_tilde = float(gen.normal())
        g_inc = g.condition(x_star, y_tilde)
        data_aug = data.with_observation(x_star, data.denormalize(y_tilde))
        g_refit = gp.build_posterior(params, data_aug, g.noise_variance)
        grid = gen.uniform(0.0, 1.0, size=(grid_size, d))
        m1, v1 = g_inc.predict_batch(grid)
        m2, v2 = g_refit.predict_batch(grid)
        worst = max(worst, float(np.max(np.abs(m1 - m2))), float(np.max(np.abs(v1 - v2))))
    return worst


def run_theory_checks(seed: int = 0) -> list[CheckResult]:
    """Fast numerical verdicts for the toolkit's structural guarantees."""
    checks: list[CheckResult] = []

    err = conditioning_equivalence_error(seed=seed, n_configs=10)
    checks.append(CheckResult(
        "conditioning-equivalence", err <= 1e-8,
        f"max |rank-one - refit| = {err:.3e} (tol 1e-8)"))

    gen = np.random.default_rng(seed + 1)
    data, params = _random_gp_config(gen, 2, 20, KernelFamily.MATERN52)
    g = gp.build_posterior(params, data)
    x_star = np.array([0.4, 0.6])
    grid = gen.uniform(0.0, 1.0, size=(60, 2))
    kb_shift = kb_invariance_check(g, x_star, grid)
    g_cl = g.condition(x_star, float(np.min(g.targets)))
    m_before, _ = g.predict_batch(x_star[None, :])
    m_after, _ = g_cl.predict_batch(x_star[None, :])
    cl_shift = float(np.abs(m_after - m_before)[0])
    checks.append(CheckResult(
        "believer-mean-invariance", kb_shift <= 1e-8 and cl_shift > 1e-4,
        f"believer shift {kb_shift:.3e} (tol 1e-8); liar contrast {cl_shift:.3e} > 1e-4"))

    lies = [float(np.min(g.targets)), float(np.max(g.targets)),
            float(np.mean(g.targets)), g.predict(x_star).mean]
    var_surfaces = []
    for y_tilde in lies:
        _, v = g.condition(x_star, y_tilde).predict_batch(grid)
        var_surfaces.append(v)
    bitwise = all(np.array_equal(var_surfaces[0], v) for v in var_surfaces[1:])
    checks.append(CheckResult(
        "variance-lie-independence", bitwise,
        "post-conditioning variance surfaces bitwise identical across lie values"))

    radius_ok = True
    details = []
    for tau in (0.25, 0.5, 0.75):
        rc = suppression_radius_check(ell=0.7, sigma_f2=1.0, sigma_n2=1e-9, tau=tau)
        radius_ok &= rc.passed
        details.append(f"tau={tau}: measured {rc.measured_radius:.4f} >= "
                       f"predicted {rc.predicted_radius:.4f}")
    checks.append(CheckResult("suppression-radius", radius_ok, "; ".join(details)))

    for kind, expect_diverse in (("gp", True), ("mq-rbf", True), ("nn", False), ("rf", False)):
        rep = run_sdd(kind, "hartmann6", n_init=30, q=3, seed=seed)
        ok = rep.diverse == expect_diverse
        if not expect_diverse:
            ok = ok and rep.min_dist == 0.0
        checks.append(CheckResult(
            f"batch-distinctness-{kind}", ok,
            f"min_dist {rep.min_dist:.3f}, diverse={rep.diverse} (expected {expect_diverse})"))

    pairs = acq_agnosticism_check("hartmann6", q=3, surrogate_kinds=("gp", "nn"), seed=seed)
    match = all(ei.diverse == ucb.diverse for ei, ucb in pairs.values())
    checks.append(CheckResult(
        "acquisition-agnosticism", match,
        "; ".join(f"{k}: ei={ei.diverse} ucb={ucb.diverse}" for k, (ei, ucb) in pairs.items())))

    from .acquisition import implicit_penalizer

    rig = prior_dominated_gp(ell=0.5, sigma_f2=1.0, sigma_n2=1e-6)
    x_c = np.array([0.0])
    rig_after = rig.condition(x_c, rig.predict(x_c).mean)
    f_best = 0.0
    psi_at, ratio_at = implicit_penalizer(rig, rig_after, x_c, f_best)
    x_far = np.array([10.0 * 0.5])
    psi_far, _ = implicit_penalizer(rig, rig_after, x_far, f_best)
    x_mid = np.array([0.4])
    psi_mid, ratio_mid = implicit_penalizer(rig, rig_after, x_mid, f_best)
    pen_ok = psi_at <= 0.05 and psi_far >= 0.99 and abs(psi_mid - ratio_mid) <= 0.1 * ratio_mid
    checks.append(CheckResult(
        "implicit-penalizer", pen_ok,
        f"psi(at)={psi_at:.3g} <= 0.05; psi(far)={psi_far:.4f} >= 0.99; "
        f"exploration regime |psi - sigma ratio| <= 10%"))

    gen2 = np.random.default_rng(seed + 2)
    data2, params2 = _random_gp_config(gen2, 2, 15, KernelFamily.MATERN52)
    g2 = gp.build_posterior(params2, data2)
    chain = g2
    pseudo = []
    for _ in range(3):
        xs = gen2.uniform(0.0, 1.0, size=2)
        yv = float(gen2.normal())
        chain = chain.condition(xs, yv)
        pseudo.append((xs, yv))
    data_aug = data2
    for xs, yv in pseudo:
        data_aug = data_aug.with_observation(xs, data2.denormalize(yv))
    joint = gp.build_posterior(params2, data_aug, g2.noise_variance)
    grid2 = gen2.uniform(0.0, 1.0, size=(50, 2))
    mc, vc = chain.predict_batch(grid2)
    mj, vj = joint.predict_batch(grid2)
    chain_err = max(float(np.max(np.abs(mc - mj))), float(np.max(np.abs(vc - vj))))
    checks.append(CheckResult(
        "chained-conditioning", chain_err <= 1e-7,
        f"3-step chain vs joint refit: max gap {chain_err:.3e} (tol 1e-7)"))

    return checks
