import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bocl.core import (
    Bounds,
    Dataset,
    InvalidInputError,
    RngStream,
    clip_to_bounds,
    denormalize_targets,
    latin_hypercube,
    normalize_targets,
    pairwise_distances,
)


class TestPairwiseDistances:
    def test_three_four_five_triangle(self):
        d = pairwise_distances([(0.0, 0.0), (3.0, 4.0)])
        np.testing.assert_allclose(d, [[0.0, 5.0], [5.0, 0.0]])

    def test_identical_points(self):
        d = pairwise_distances([(1.0, 2.0), (1.0, 2.0)])
        np.testing.assert_array_equal(d, np.zeros((2, 2)))

    def test_matches_per_pair_recomputation(self):
        # Oracle: direct per-pair distance loop.
        gen = np.random.default_rng(42)
        pts = gen.normal(size=(3, 4))
        d = pairwise_distances(pts)
        for i in range(3):
            for j in range(3):
                expected = np.sqrt(np.sum((pts[i] - pts[j]) ** 2))
                assert d[i, j] == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            pairwise_distances([np.array([1.0]), np.array([1.0, 2.0])])

    def test_single_point_rejected(self):
        with pytest.raises(InvalidInputError):
            pairwise_distances([(0.0, 0.0)])

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(min_value=2, max_value=8),
        st.integers(min_value=1, max_value=5),
        st.integers(min_value=0, max_value=2**31 - 1),
    )
    def test_symmetry_nonnegativity_zero_diagonal(self, n, d, seed):
        pts = np.random.default_rng(seed).normal(size=(n, d))
        dist = pairwise_distances(pts)
        assert np.array_equal(dist, dist.T)
        assert np.all(dist >= 0)
        assert np.all(np.diag(dist) == 0)


class TestNormalizeTargets:
    def test_two_point_symmetry(self):
        norm, mean, std = normalize_targets([2.0, 4.0])
        np.testing.assert_allclose(norm, [-1.0, 1.0])
        assert mean == 3.0
        assert std == 1.0

    def test_constant_targets_fall_back_to_unit_scale(self):
        norm, mean, std = normalize_targets([5.0, 5.0, 5.0])
        np.testing.assert_array_equal(norm, [0.0, 0.0, 0.0])
        assert mean == 5.0
        assert std == 1.0

    def test_round_trip(self):
        raw = np.random.default_rng(7).uniform(-3, 9, size=20)
        norm, mean, std = normalize_targets(raw)
        back = denormalize_targets(norm, mean, std)
        np.testing.assert_allclose(back, raw, rtol=1e-12, atol=1e-12)
        assert np.mean(norm) == pytest.approx(0.0, abs=1e-12)
        assert np.std(norm) == pytest.approx(1.0, abs=1e-12)

    def test_non_finite_rejected(self):
        with pytest.raises(InvalidInputError):
            normalize_targets([1.0, np.nan])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=30))
    def test_round_trip_property(self, raw):
        norm, mean, std = normalize_targets(raw)
        back = denormalize_targets(norm, mean, std)
        np.testing.assert_allclose(back, raw, rtol=1e-9, atol=1e-6)


class TestClipToBounds:
    def test_above_upper(self):
        b = Bounds(np.array([0.0]), np.array([1.0]))
        np.testing.assert_array_equal(clip_to_bounds([1.2], b), [1.0])

    def test_interior_unchanged(self):
        b = Bounds.cube(0.0, 1.0, 2)
        x = np.array([0.3, 0.7])
        np.testing.assert_array_equal(clip_to_bounds(x, b), x)

    def test_mixed(self):
        b = Bounds.cube(0.0, 1.0, 2)
        np.testing.assert_array_equal(clip_to_bounds([-3.0, 0.5], b), [0.0, 0.5])

    def test_dimension_mismatch(self):
        with pytest.raises(InvalidInputError):
            clip_to_bounds([0.5], Bounds.cube(0.0, 1.0, 2))


class TestBounds:
    def test_invalid_ordering_rejected(self):
        with pytest.raises(InvalidInputError):
            Bounds(np.array([1.0]), np.array([1.0]))

    def test_unit_mapping(self):
        b = Bounds(np.array([-5.0, 0.0]), np.array([5.0, 10.0]))
        np.testing.assert_allclose(b.from_unit([0.5, 0.2]), [0.0, 2.0])
        np.testing.assert_allclose(b.to_unit([0.0, 2.0]), [0.5, 0.2])


class TestDataset:
    def test_normalization_metadata_frozen_on_append(self):
        data = Dataset.from_observations([[0.0], [1.0]], [2.0, 4.0])
        grown = data.with_observation([0.5], 100.0)
        assert grown.y_mean == data.y_mean
        assert grown.y_std == data.y_std
        assert grown.n == 3
        assert grown.targets[-1] == 100.0

    def test_normalize_denormalize_inverse(self):
        data = Dataset.from_observations([[0.0], [1.0], [2.0]], [1.0, 5.0, 9.0])
        assert data.denormalize(data.normalize(3.21)) == pytest.approx(3.21, rel=1e-14)


class TestRngStream:
    def test_equal_seeds_bitwise_identical(self):
        a = RngStream(123).generator.uniform(size=10)
        b = RngStream(123).generator.uniform(size=10)
        np.testing.assert_array_equal(a, b)

    def test_different_seeds_differ(self):
        a = RngStream(1).generator.uniform(size=10)
        b = RngStream(2).generator.uniform(size=10)
        assert not np.array_equal(a, b)

    def test_substreams_independent_of_parent_consumption(self):
        r1 = RngStream(9)
        r1.generator.uniform(size=100)  # consume the parent
        a = r1.substream("lhs").generator.uniform(size=5)
        b = RngStream(9).substream("lhs").generator.uniform(size=5)
        np.testing.assert_array_equal(a, b)

    def test_adding_consumer_does_not_perturb_existing_stream(self):
        base = RngStream(4)
        before = base.substream("fantasy").generator.uniform(size=5)
        other = RngStream(4)
        other.substream("nn-init").generator.uniform(size=50)  # a new consumer
        after = other.substream("fantasy").generator.uniform(size=5)
        np.testing.assert_array_equal(before, after)

    def test_distinct_labels_give_distinct_streams(self):
        r = RngStream(0)
        a = r.substream("a").generator.uniform(size=5)
        b = r.substream("b").generator.uniform(size=5)
        assert not np.array_equal(a, b)

    def test_draw_delegation(self):
        r = RngStream(0)
        assert 0.0 <= r.uniform() <= 1.0


class TestLatinHypercube:
    def test_one_sample_per_stratum(self):
        b = Bounds.cube(0.0, 1.0, 3)
        pts = latin_hypercube(b, 8, RngStream(0))
        for j in range(3):
            strata = np.floor(pts[:, j] * 8).astype(int)
            assert sorted(strata) == list(range(8))

    def test_determinism(self):
        b = Bounds.cube(-2.0, 2.0, 2)
        a = latin_hypercube(b, 5, RngStream(3))
        c = latin_hypercube(b, 5, RngStream(3))
        np.testing.assert_array_equal(a, c)
