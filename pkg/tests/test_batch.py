import math

import numpy as np
import pytest

from bocl import gp
from bocl.acquisition import AcqSpec, acq_value
from bocl.acq_optim import fixed_starts, lhs_starts, maximize_acq
from bocl.batch import (
    ForestSurrogate,
    NnSurrogate,
    select_batch,
    select_batch_lp,
    select_batch_random,
)
from bocl.bench import get_benchmark, lhs_init
from bocl.core import Bounds, Dataset, InvalidInputError, RngStream, pairwise_distances
from bocl.kernels import KernelFamily, KernelParams
from bocl.mq_rbf import rbf_fit
from bocl.parametric import forest_fit, nn_fit


def hartmann_setup(seed=0, n_init=20):
    b = get_benchmark("hartmann6")
    rng = RngStream(seed)
    data = lhs_init(b, n_init, rng.substream("lhs"))
    g = gp.fit(data, restarts=3, rng=rng.substream("fit"))
    return b, data, g, rng


class TestSelectBatch:
    def test_gp_batch_points_pairwise_distinct(self):
        b, data, g, rng = hartmann_setup()
        for lie in ("cl-min", "kb", "fantasy"):
            res = select_batch(g, data, 3, lie, AcqSpec("ei"), b.bounds,
                               fixed_starts(b.bounds), rng.substream(f"batch-{lie}"))
            d = pairwise_distances(res.points)
            iu = np.triu_indices(3, k=1)
            assert np.min(d[iu]) > 1e-9

    def test_believer_keeps_mean_surface(self):
        b, data, g, rng = hartmann_setup(seed=1)
        res = select_batch(g, data, 2, "kb", AcqSpec("ei"), b.bounds,
                           fixed_starts(b.bounds), rng.substream("batch"))
        g1 = g.condition(res.points[0], res.lies[0])
        grid = np.random.default_rng(2).uniform(0, 1, size=(50, 6))
        m_before, _ = g.predict_batch(grid)
        m_after, _ = g1.predict_batch(grid)
        assert np.max(np.abs(m_after - m_before)) <= 1e-8

    def test_q1_equals_plain_acquisition_maximization(self):
        b, data, g, rng = hartmann_setup(seed=3)
        starts = fixed_starts(b.bounds)
        res = select_batch(g, data, 1, "cl-min", AcqSpec("ei"), b.bounds, starts,
                           RngStream(9).substream("batch"))
        f_best = float(np.min(g.targets))

        def objective(x):
            return acq_value(AcqSpec("ei"), g.predict(x), f_best)

        def objective_batch(X):
            from bocl.acquisition import acq_values

            means, variances = g.predict_batch(X)
            return acq_values(AcqSpec("ei"), means, variances, f_best)

        direct = maximize_acq(objective, b.bounds, starts, objective_batch=objective_batch)
        np.testing.assert_array_equal(res.points[0], direct.point)

    def test_constant_liar_values_come_from_real_data_only(self):
        b, data, g, rng = hartmann_setup(seed=4)
        y_norm = data.targets_normalized
        res = select_batch(g, data, 3, "cl-min", AcqSpec("ei"), b.bounds,
                           fixed_starts(b.bounds), rng.substream("batch"))
        assert np.all(res.lies == float(np.min(y_norm)))
        res_max = select_batch(g, data, 3, "cl-max", AcqSpec("ei"), b.bounds,
                               fixed_starts(b.bounds), rng.substream("batch2"))
        assert np.all(res_max.lies == float(np.max(y_norm)))

    def test_sigma_recorded_drops_after_conditioning(self):
        b, data, g, rng = hartmann_setup(seed=5)
        res = select_batch(g, data, 3, "kb", AcqSpec("ei"), b.bounds,
                           fixed_starts(b.bounds), rng.substream("batch"))
        assert np.all(res.sigma_after <= res.sigma_before + 1e-12)

    def test_invalid_inputs(self):
        b, data, g, rng = hartmann_setup(seed=6, n_init=10)
        with pytest.raises(InvalidInputError):
            select_batch(g, data, 0, "cl-min", AcqSpec("ei"), b.bounds,
                         fixed_starts(b.bounds), rng)
        with pytest.raises(InvalidInputError):
            select_batch(g, data, 2, "median-liar", AcqSpec("ei"), b.bounds,
                         fixed_starts(b.bounds), rng)

    def test_variance_geometry_identical_across_lie_strategies(self):
        # Replay one pinned point sequence through conditioning under every
        # lie value: the variance surfaces must agree bitwise.
        b, data, g, _ = hartmann_setup(seed=7, n_init=15)
        gen = np.random.default_rng(8)
        sequence = gen.uniform(0, 1, size=(3, 6))
        grid = gen.uniform(0, 1, size=(40, 6))
        y = data.targets_normalized
        surfaces = []
        for lie_value_fn in (
            lambda m_: float(np.min(y)),
            lambda m_: float(np.max(y)),
            lambda m_: float(np.mean(y)),
            lambda m_: m_.mean,
        ):
            model = g
            for x in sequence:
                model = model.condition(x, lie_value_fn(model.predict(x)))
            _, v = model.predict_batch(grid)
            surfaces.append(v)
        for v in surfaces[1:]:
            assert np.array_equal(surfaces[0], v)

    def test_fantasy_lies_deterministic_given_stream(self):
        b, data, g, _ = hartmann_setup(seed=9, n_init=15)
        r1 = select_batch(g, data, 3, "fantasy", AcqSpec("ei"), b.bounds,
                          fixed_starts(b.bounds), RngStream(42).substream("batch"))
        r2 = select_batch(g, data, 3, "fantasy", AcqSpec("ei"), b.bounds,
                          fixed_starts(b.bounds), RngStream(42).substream("batch"))
        np.testing.assert_array_equal(r1.points, r2.points)
        np.testing.assert_array_equal(r1.lies, r2.lies)


class TestParametricDegeneracy:
    def test_nn_without_retrain_collapses_bitwise(self):
        b = get_benchmark("hartmann6")
        rng = RngStream(10)
        data = lhs_init(b, 20, rng.substream("lhs"))
        surrogate = NnSurrogate(nn_fit(data, rng.substream("nn"), n_members=4))
        res = select_batch(surrogate, data, 3, "cl-min", AcqSpec("ei"), b.bounds,
                           fixed_starts(b.bounds), rng.substream("batch"))
        assert np.array_equal(res.points[0], res.points[1])
        assert np.array_equal(res.points[0], res.points[2])

    def test_rf_without_rebuild_collapses_bitwise(self):
        b = get_benchmark("hartmann6")
        rng = RngStream(11)
        data = lhs_init(b, 20, rng.substream("lhs"))
        surrogate = ForestSurrogate(forest_fit(data, rng.substream("rf"), n_trees=50))
        res = select_batch(surrogate, data, 3, "cl-min", AcqSpec("ei"), b.bounds,
                           fixed_starts(b.bounds), rng.substream("batch"))
        assert np.array_equal(res.points[0], res.points[1])
        assert np.array_equal(res.points[0], res.points[2])

    def test_conditioned_parametric_predictions_bitwise_unchanged(self):
        b = get_benchmark("hartmann6")
        rng = RngStream(12)
        data = lhs_init(b, 20, rng.substream("lhs"))
        grid = np.random.default_rng(13).uniform(0, 1, size=(30, 6))
        nn = NnSurrogate(nn_fit(data, rng.substream("nn"), n_members=4))
        rf = ForestSurrogate(forest_fit(data, rng.substream("rf"), n_trees=50))
        for surrogate in (nn, rf):
            before = surrogate.predict_batch(grid)
            after = surrogate.condition(np.full(6, 0.5), -2.0).predict_batch(grid)
            assert np.array_equal(before[0], after[0])
            assert np.array_equal(before[1], after[1])


class TestSeparationScale:
    def test_consecutive_ucb_points_separated_by_lengthscale(self):
        # Prior-dominated 1-d window: no data within 10 lengthscales.
        ell = 0.5
        params = KernelParams(1.0, np.array([ell]), KernelFamily.SQUARED_EXPONENTIAL)
        data = Dataset.from_observations(np.array([[30.0 * ell]]), np.array([0.0]))
        g = gp.build_posterior(params, data, noise_variance=1e-6)
        bounds = Bounds(np.array([0.0]), np.array([10.0 * ell]))
        res = select_batch(g, data, 3, "kb", AcqSpec("ucb", beta=2.0), bounds,
                           lhs_starts(bounds, 10, RngStream(1)),
                           RngStream(2).substream("batch"))
        gaps = np.abs(np.diff(res.points[:, 0]))
        assert np.all(gaps >= 0.8 * ell)


class TestSelectBatchLp:
    def test_q1_identical_to_plain_maximization(self):
        b, data, g, _ = hartmann_setup(seed=14, n_init=15)
        starts = fixed_starts(b.bounds)
        res = select_batch_lp(g, data, 1, AcqSpec("ei"), b.bounds, starts)
        f_best = float(np.min(g.targets))

        def objective_batch(X):
            from bocl.acquisition import acq_values

            means, variances = g.predict_batch(X)
            # With no anchors the penalty product is identically one.
            return np.maximum(acq_values(AcqSpec("ei"), means, variances, f_best), 0.0)

        direct = maximize_acq(lambda x: acq_value(AcqSpec("ei"), g.predict(x), f_best),
                              b.bounds, starts, objective_batch=objective_batch)
        np.testing.assert_array_equal(res.points[0], direct.point)

    def test_second_point_escapes_penalty_trough(self):
        b, data, g, _ = hartmann_setup(seed=15, n_init=15)
        res = select_batch_lp(g, data, 2, AcqSpec("ei"), b.bounds,
                              fixed_starts(b.bounds))
        assert np.linalg.norm(res.points[1] - res.points[0]) > 0.0

    def test_penalty_factor_matches_formula_at_selected_point(self):
        b, data, g, _ = hartmann_setup(seed=16, n_init=15)
        res = select_batch_lp(g, data, 2, AcqSpec("ei"), b.bounds,
                              fixed_starts(b.bounds))
        ell = float(np.exp(np.mean(np.log(g.params.lengthscales))))
        r2 = float(np.sum((res.points[1] - res.points[0]) ** 2))
        expected_factor = 1.0 - math.exp(-r2 / (2.0 * ell**2))
        from bocl.acquisition import LpPenalty, lp_penalty_factor

        pen = LpPenalty(res.points[0][None, :], ell)
        assert lp_penalty_factor(pen, res.points[1]) == pytest.approx(
            expected_factor, rel=1e-12)


class TestSelectBatchRandom:
    def test_determinism(self):
        b = Bounds.cube(-2.0, 3.0, 4)
        r1 = select_batch_random(b, 5, RngStream(0).substream("r"))
        r2 = select_batch_random(b, 5, RngStream(0).substream("r"))
        np.testing.assert_array_equal(r1.points, r2.points)

    def test_within_bounds(self):
        b = Bounds.cube(-2.0, 3.0, 4)
        res = select_batch_random(b, 100, RngStream(1))
        assert np.all(res.points >= -2.0) and np.all(res.points <= 3.0)

    def test_uniform_moments(self):
        b = Bounds(np.array([0.0, -10.0]), np.array([1.0, 10.0]))
        res = select_batch_random(b, 10_000, RngStream(2))
        center = (b.lower + b.upper) / 2
        se = b.span / math.sqrt(12 * 10_000)
        for j in range(2):
            assert abs(np.mean(res.points[:, j]) - center[j]) <= 3 * se[j]
