import math
import tracemalloc

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from topobetti.errors import InvalidCount, InvalidQuantile, NonFiniteInput, TooFewPoints
from topobetti.pointcloud import (DistanceMatrix, PointCloud, maxmin_indices, maxmin_subsample, merge_coincident,
                                  pairwise_distances, read_cloud_csv, scale_select, uniform_subsample,
                                  write_cloud_csv)
from topobetti.seeding import derive_rng, stream_id
from tests.helpers import circle_cloud, square_corners


class TestPointCloud:

    def test_rejects_nan(self):
        with pytest.raises(NonFiniteInput):
            PointCloud(np.array([[0.0, np.nan]]))

    def test_rejects_inf(self):
        with pytest.raises(NonFiniteInput):
            PointCloud(np.array([[np.inf, 1.0]]))

    def test_rejects_empty(self):
        with pytest.raises(InvalidCount):
            PointCloud(np.empty((0, 3)))

    def test_vector_is_one_dimensional_cloud(self):
        cloud = PointCloud(np.array([1.0, 2.0, 3.0]))
        assert (cloud.n, cloud.d) == (3, 1)


class TestPairwiseDistances:

    def test_single_point(self):
        dm = pairwise_distances(PointCloud(np.zeros((1, 2))))
        assert dm.entries.shape == (1, 1)
        assert dm.entries[0, 0] == 0.0

    def test_three_four_five(self):
        dm = pairwise_distances(PointCloud(np.array([[0.0, 0.0], [3.0, 4.0]])))
        assert dm.entries[0, 1] == 5.0
        assert dm.entries[1, 0] == 5.0

    def test_matches_per_pair_recomputation(self):
        points = np.random.default_rng(3).normal(size=(10, 4))
        dm = pairwise_distances(PointCloud(points))
        for i in range(10):
            for j in range(10):
                expected = 0.0 if i == j else math.sqrt(sum((points[i, k] - points[j, k]) ** 2 for k in range(4)))
                assert dm.entries[i, j] == pytest.approx(expected, rel=1e-12, abs=1e-15)

    def test_exactly_symmetric(self):
        points = np.random.default_rng(5).normal(size=(300, 3))
        dm = pairwise_distances(PointCloud(points))
        assert np.array_equal(dm.entries, dm.entries.T)
        assert np.all(np.diag(dm.entries) == 0.0)

    def test_wide_cloud_memory_is_quadratic_in_n(self):
        points = np.random.default_rng(7).normal(size=(300, 5000))
        tracemalloc.start()
        try:
            dm = pairwise_distances(PointCloud(points))
            _, peak = tracemalloc.get_traced_memory()
        finally:
            tracemalloc.stop()
        assert dm.entries.shape == (300, 300)
        # finiteness masks and a few n x n buffers, nothing of size n * n * d
        assert peak < 32 * 2 ** 20
        row = np.sqrt(np.sum((points - points[17]) ** 2, axis=1))
        np.testing.assert_allclose(dm.entries[17], row, rtol=1e-12, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000), st.integers(3, 12), st.integers(1, 4))
    def test_triangle_inequality(self, seed, n, d):
        points = np.random.default_rng(seed).normal(size=(n, d))
        e = pairwise_distances(PointCloud(points)).entries
        bound = e[:, :, None] + e[None, :, :]
        assert np.all(e[:, None, :] <= bound * (1 + 1e-9) + 1e-12)


class TestMaxmin:

    def test_full_sample_is_permutation(self):
        cloud = circle_cloud(30)
        chosen = maxmin_subsample(cloud, 30, seed=1)
        assert sorted(map(tuple, chosen.points)) == sorted(map(tuple, cloud.points))

    def test_single_landmark_comes_from_cloud(self):
        cloud = circle_cloud(30)
        chosen = maxmin_subsample(cloud, 1, seed=4)
        assert chosen.n == 1
        assert any(np.array_equal(chosen.points[0], p) for p in cloud.points)

    @pytest.mark.parametrize("m", [0, 31])
    def test_invalid_count(self, m):
        with pytest.raises(InvalidCount):
            maxmin_subsample(circle_cloud(30), m, seed=0)

    @pytest.mark.parametrize("first", [0, 1, 2, 3, 4])
    def test_square_with_center(self, first):
        points = np.vstack([square_corners(), [[0.5, 0.5]]])
        chosen = maxmin_indices(points, 4, first)
        if first == 4:
            # the center first, then three corners
            assert chosen[0] == 4
            assert set(chosen[1:]) <= {0, 1, 2, 3}
        else:
            assert set(chosen) == {0, 1, 2, 3}

    def test_deterministic_subset(self):
        cloud = circle_cloud(100)
        a = maxmin_subsample(cloud, 20, seed=9)
        b = maxmin_subsample(cloud, 20, seed=9)
        assert np.array_equal(a.points, b.points)
        rows = {tuple(p) for p in cloud.points}
        assert all(tuple(p) in rows for p in a.points)

    def test_uniform_subsample_keeps_input_order(self):
        cloud = PointCloud(np.arange(20, dtype=float).reshape(-1, 1))
        chosen = uniform_subsample(cloud, 5, seed=2).points[:, 0]
        assert np.all(np.diff(chosen) > 0)


class TestMergeCoincident:

    def test_keeps_first_occurrences_in_order(self):
        cloud = PointCloud(np.array([[1.0], [0.0], [1.0], [2.0], [0.0]]))
        assert merge_coincident(cloud).points[:, 0].tolist() == [1.0, 0.0, 2.0]

    def test_identical_points_collapse(self):
        assert merge_coincident(PointCloud(np.ones((50, 3)))).n == 1


class TestScaleSelect:

    def test_two_points(self):
        dm = pairwise_distances(PointCloud(np.array([[0.0, 0.0], [3.0, 4.0]])))
        assert scale_select(dm, 0.5) == 5.0

    def test_nearest_rank(self):
        # upper triangle distances 1, 2, 3, 4, 5, 6 on a line 0, 1, 3, 6
        dm = pairwise_distances(PointCloud(np.array([0.0, 1.0, 3.0, 6.0])))
        assert sorted(dm.upper_triangle().tolist()) == [1.0, 2.0, 3.0, 3.0, 5.0, 6.0]
        assert scale_select(dm, 0.25) == 2.0
        assert scale_select(dm, 1 / 6) == 1.0

    def test_four_distances(self):
        entries = np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0]], dtype=float)
        dm = DistanceMatrix(entries)
        assert scale_select(dm, 1 / 3) == 1.0
        assert scale_select(dm, 1.0) == 3.0

    @pytest.mark.parametrize("q, expected", [(0.3, 3.0), (0.29, 3.0), (0.31, 4.0), (0.7, 8.0), (0.1, 1.0)])
    def test_rank_uses_decimal_quantile(self, q, expected):
        # distances 1, 2, 3, 4, 6, 7, 8, 12, 14, 15
        dm = pairwise_distances(PointCloud(np.array([0.0, 1.0, 3.0, 7.0, 15.0])))
        assert scale_select(dm, q) == expected

    def test_q_one_is_maximum(self):
        dm = pairwise_distances(circle_cloud(40))
        assert scale_select(dm, 1.0) == dm.entries.max()

    @pytest.mark.parametrize("q", [0.0, -0.1, 1.5, float("nan")])
    def test_invalid_quantile(self, q):
        dm = pairwise_distances(circle_cloud(5))
        with pytest.raises(InvalidQuantile):
            scale_select(dm, q)

    def test_too_few_points(self):
        with pytest.raises(TooFewPoints):
            scale_select(pairwise_distances(PointCloud(np.zeros((1, 2)))), 0.5)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 1000), st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_monotone_in_quantile(self, seed, q1, q2):
        dm = pairwise_distances(PointCloud(np.random.default_rng(seed).normal(size=(12, 2))))
        lo, hi = sorted((q1, q2))
        assert scale_select(dm, lo) <= scale_select(dm, hi)


class TestCloudCsv:

    def test_write_then_read(self, tmp_path):
        cloud = circle_cloud(25)
        path = tmp_path / "cloud.csv"
        write_cloud_csv(cloud, str(path))
        text = path.read_bytes()
        assert b"\r\n" not in text
        assert len(text.splitlines()) == 25
        assert np.array_equal(read_cloud_csv(str(path)).points, cloud.points)


class TestSeeding:

    def test_streams_are_independent(self):
        a = derive_rng(7, "init").integers(0, 1 << 30, size=5)
        b = derive_rng(7, "shuffle").integers(0, 1 << 30, size=5)
        assert not np.array_equal(a, b)

    def test_streams_repeat(self):
        a = derive_rng(7, "subsample").random(4)
        b = derive_rng(7, "subsample").random(4)
        assert np.array_equal(a, b)

    def test_stream_id_is_stable(self):
        assert stream_id("init") == stream_id("init")
        assert stream_id("init") != stream_id("scoring")
