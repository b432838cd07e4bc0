"""Geometry layer: containers, kNN graphs, perceptibility metrics."""
from __future__ import annotations

import numpy as np
import pytest

from specwalk.geometry import (
    CloudShapeError,
    DegenerateCloudError,
    PointCloud,
    chamfer_distance,
    combined_distance,
    hausdorff_distance,
    knn_graph,
    l2_norm_distance,
    max_pointwise_deviation,
    normalize_unit_ball,
    variance_distance,
)

from reference import (
    brute_chamfer,
    brute_hausdorff,
    brute_knn_edges,
    brute_variance,
)


def cloud(*rows):
    return PointCloud(np.asarray(rows, dtype=np.float64))


class TestPointCloud:
    def test_rejects_bad_shapes(self):
        with pytest.raises(CloudShapeError):
            PointCloud(np.zeros((4, 2)))
        with pytest.raises(CloudShapeError):
            PointCloud(np.zeros((0, 3)))
        with pytest.raises(CloudShapeError):
            PointCloud(np.zeros(12))

    def test_rejects_non_finite(self):
        pts = np.zeros((3, 3))
        pts[1, 2] = np.nan
        with pytest.raises(CloudShapeError):
            PointCloud(pts)
        pts[1, 2] = np.inf
        with pytest.raises(CloudShapeError):
            PointCloud(pts)

    def test_backing_array_is_frozen(self):
        c = cloud((0, 0, 0), (1, 1, 1))
        with pytest.raises(ValueError):
            c.points[0, 0] = 7.0

    def test_copies_input(self):
        raw = np.zeros((2, 3))
        c = PointCloud(raw)
        raw[0, 0] = 5.0
        assert c.points[0, 0] == 0.0


class TestNormalizeUnitBall:
    def test_two_point_example(self):
        out = normalize_unit_ball(cloud((0, 0, 0), (2, 0, 0)))
        np.testing.assert_allclose(out.points,
                                   [[-1, 0, 0], [1, 0, 0]], atol=1e-15)

    def test_centroid_and_radius(self, random_cloud):
        out = normalize_unit_ball(random_cloud(128, seed=3, scale=7.0))
        np.testing.assert_allclose(out.points.mean(axis=0), 0.0, atol=1e-12)
        assert np.isclose(np.linalg.norm(out.points, axis=1).max(), 1.0)

    def test_idempotent(self, random_cloud):
        once = normalize_unit_ball(random_cloud(64, seed=9))
        twice = normalize_unit_ball(once)
        assert np.max(np.abs(once.points - twice.points)) < 1e-12

    def test_degenerate_raises(self):
        with pytest.raises(DegenerateCloudError):
            normalize_unit_ball(cloud((1, 2, 3), (1, 2, 3), (1, 2, 3)))


class TestKnnGraph:
    def test_collinear_tie_breaks_low_index(self):
        # Middle point is equidistant from both ends; the tie must go to 0.
        g = knn_graph(cloud((0, 0, 0), (1, 0, 0), (2, 0, 0)), k=1)
        assert {tuple(e) for e in g.edges} == {(0, 1), (1, 2)}

    def test_matches_bruteforce(self, random_cloud):
        for seed in range(5):
            c = random_cloud(40, seed=seed)
            g = knn_graph(c, k=4)
            assert {tuple(e) for e in g.edges} == brute_knn_edges(c.points, 4)

    def test_translation_invariant(self, random_cloud):
        c = random_cloud(50, seed=11)
        g0 = knn_graph(c, k=5)
        g1 = knn_graph(PointCloud(c.points + np.array([12.0, -3.0, 0.5])), k=5)
        np.testing.assert_array_equal(g0.edges, g1.edges)

    def test_edges_canonical(self, random_cloud):
        g = knn_graph(random_cloud(30, seed=2), k=3)
        assert np.all(g.edges[:, 0] < g.edges[:, 1])
        assert len(np.unique(g.edges, axis=0)) == len(g.edges)

    def test_min_degree(self, random_cloud):
        g = knn_graph(random_cloud(30, seed=4), k=3)
        assert g.degrees.min() >= 3

    def test_duplicate_points_deterministic(self):
        pts = np.zeros((6, 3))
        pts[3:] = 1.0
        g1 = knn_graph(PointCloud(pts), k=2)
        g2 = knn_graph(PointCloud(pts), k=2)
        np.testing.assert_array_equal(g1.edges, g2.edges)
        # All-tied distances within each duplicate cluster: lowest indices win.
        assert (0, 1) in {tuple(e) for e in g1.edges}

    def test_k_bounds(self):
        c = cloud((0, 0, 0), (1, 0, 0))
        with pytest.raises(ValueError):
            knn_graph(c, k=0)
        with pytest.raises(ValueError):
            knn_graph(c, k=2)


class TestChamfer:
    def test_single_point_squared(self):
        assert chamfer_distance(cloud((1, 0, 0)), cloud((0, 0, 0))) == 1.0

    def test_two_point_mean(self):
        d = chamfer_distance(cloud((1, 0, 0), (0, 0, 0)), cloud((0, 0, 0)))
        assert d == 0.5

    def test_identity_zero(self, random_cloud):
        c = random_cloud(32, seed=5)
        assert chamfer_distance(c, c) == 0.0

    def test_matches_bruteforce(self, random_cloud):
        a, b = random_cloud(25, seed=6), random_cloud(31, seed=7)
        np.testing.assert_allclose(chamfer_distance(a, b),
                                   brute_chamfer(a.points, b.points), rtol=1e-12)

    def test_symmetric_flag(self, random_cloud):
        a, b = random_cloud(20, seed=8), random_cloud(24, seed=9)
        sym = chamfer_distance(a, b, symmetric=True)
        expected = 0.5 * (chamfer_distance(a, b) + chamfer_distance(b, a))
        np.testing.assert_allclose(sym, expected, rtol=1e-12)


class TestOtherMetrics:
    def test_hausdorff_unsquared(self):
        d = hausdorff_distance(cloud((0, 0, 0), (3, 0, 0)), cloud((0, 0, 0)))
        assert d == 3.0

    def test_hausdorff_matches_bruteforce(self, random_cloud):
        a, b = random_cloud(22, seed=10), random_cloud(28, seed=11)
        np.testing.assert_allclose(hausdorff_distance(a, b),
                                   brute_hausdorff(a.points, b.points), rtol=1e-12)

    def test_variance_population(self):
        # NN distances are {0, 2}; population variance is 1, sample would be 2.
        d = variance_distance(cloud((0, 0, 0), (2, 0, 0)), cloud((0, 0, 0)))
        assert d == 1.0

    def test_variance_matches_bruteforce(self, random_cloud):
        a, b = random_cloud(26, seed=12), random_cloud(20, seed=13)
        np.testing.assert_allclose(variance_distance(a, b),
                                   brute_variance(a.points, b.points), rtol=1e-12)

    def test_l2_two_point_displacement(self):
        a = cloud((0.3, 0, 0), (1.3, 0, 0))
        b = cloud((0, 0, 0), (1, 0, 0))
        np.testing.assert_allclose(l2_norm_distance(a, b), 0.3 * np.sqrt(2))

    def test_max_deviation(self):
        a = cloud((0.01, 0, 0), (0, 0.05, 0), (0, 0, 0.02))
        b = cloud((0, 0, 0), (0, 0, 0), (0, 0, 0))
        assert max_pointwise_deviation(a, b) == 0.05

    def test_size_mismatch_raises(self, random_cloud):
        a, b = random_cloud(8, seed=1), random_cloud(9, seed=2)
        with pytest.raises(ValueError):
            l2_norm_distance(a, b)
        with pytest.raises(ValueError):
            max_pointwise_deviation(a, b)


class TestCombinedDistance:
    def test_hand_computed(self):
        # NN distances {0, 3}: chamfer 4.5, hausdorff 3, variance 2.25.
        adv = cloud((0, 0, 0), (3, 0, 0))
        ref = cloud((0, 0, 0))
        expected = 4.5 + 2.0 * 3.0 + 0.5 * 2.25
        np.testing.assert_allclose(combined_distance(adv, ref), expected)

    def test_component_identity(self, random_cloud):
        a, b = random_cloud(30, seed=14), random_cloud(30, seed=15)
        for g1, g2 in [(2.0, 0.5), (0.0, 0.0), (1.5, 3.0)]:
            expected = (chamfer_distance(a, b) + g1 * hausdorff_distance(a, b)
                        + g2 * variance_distance(a, b))
            np.testing.assert_allclose(combined_distance(a, b, g1, g2), expected,
                                       rtol=1e-12)

    def test_monotone_in_weights(self, random_cloud):
        a, b = random_cloud(16, seed=16), random_cloud(16, seed=17)
        base = combined_distance(a, b, 1.0, 1.0)
        assert combined_distance(a, b, 2.0, 1.0) >= base
        assert combined_distance(a, b, 1.0, 2.0) >= base

    def test_negative_weights_raise(self, random_cloud):
        a = random_cloud(8, seed=18)
        with pytest.raises(ValueError):
            combined_distance(a, a, -1.0, 0.5)
