"""Spectral layer: Laplacians, eigenbases, transforms, band energies."""
from __future__ import annotations

import numpy as np
import pytest

from specwalk.geometry import PointCloud, knn_graph
from specwalk.spectral import (
    ConnectivityWarning,
    NonSymmetricMatrixError,
    Spectrum,
    band_energy_fraction,
    build_laplacian,
    cloud_basis,
    concat_bands,
    eigendecompose,
    gft,
    igft,
    split_bands,
)

from reference import jacobi_eigh


def two_node_cloud():
    return PointCloud(np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))


class TestLaplacian:
    def test_two_node(self):
        lap = build_laplacian(knn_graph(two_node_cloud(), k=1))
        np.testing.assert_array_equal(lap, [[1.0, -1.0], [-1.0, 1.0]])

    def test_rows_sum_to_zero(self, random_cloud):
        g = knn_graph(random_cloud(40, seed=21), k=5)
        lap = build_laplacian(g)
        np.testing.assert_allclose(lap.sum(axis=1), 0.0, atol=1e-12)
        np.testing.assert_array_equal(np.diag(lap), g.degrees)

    def test_symmetric(self, random_cloud):
        lap = build_laplacian(knn_graph(random_cloud(30, seed=22), k=4))
        np.testing.assert_array_equal(lap, lap.T)

    def test_gaussian_weights_still_laplacian(self, random_cloud):
        c = random_cloud(30, seed=23)
        basis = cloud_basis(c, k=4, weighting="gaussian")
        assert basis.eigenvalues[0] == pytest.approx(0.0, abs=1e-10)
        assert np.all(basis.eigenvalues >= -1e-10)

    def test_bad_weights(self, random_cloud):
        g = knn_graph(random_cloud(10, seed=24), k=2)
        with pytest.raises(ValueError):
            build_laplacian(g, edge_weights=np.zeros(len(g.edges)))
        with pytest.raises(ValueError):
            build_laplacian(g, edge_weights=np.ones(len(g.edges) + 1))


class TestEigendecompose:
    def test_two_node_exact(self):
        basis = eigendecompose(np.array([[1.0, -1.0], [-1.0, 1.0]]))
        np.testing.assert_allclose(basis.eigenvalues, [0.0, 2.0], atol=1e-14)
        s = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(basis.eigenvectors,
                                   [[s, s], [s, -s]], atol=1e-14)

    def test_zero_matrix(self):
        basis = eigendecompose(np.zeros((5, 5)))
        np.testing.assert_array_equal(basis.eigenvalues, np.zeros(5))
        np.testing.assert_allclose(basis.eigenvectors.T @ basis.eigenvectors,
                                   np.eye(5), atol=1e-14)

    def test_orthonormal_and_reconstructs(self, random_cloud):
        for seed in range(4):
            lap = build_laplacian(knn_graph(random_cloud(36, seed=seed), k=5))
            basis = eigendecompose(lap)
            n = basis.n
            np.testing.assert_allclose(basis.eigenvectors.T @ basis.eigenvectors,
                                       np.eye(n), atol=1e-10)
            rebuilt = basis.eigenvectors @ np.diag(basis.eigenvalues) @ basis.eigenvectors.T
            np.testing.assert_allclose(rebuilt, lap, atol=1e-8)
            assert np.all(np.diff(basis.eigenvalues) >= -1e-10)

    def test_sign_convention(self, random_cloud):
        basis = eigendecompose(build_laplacian(knn_graph(random_cloud(32, seed=31), k=4)))
        for col in basis.eigenvectors.T:
            significant = col[np.abs(col) > 1e-12]
            assert significant[0] > 0

    def test_bitwise_deterministic(self, random_cloud):
        lap = build_laplacian(knn_graph(random_cloud(28, seed=33), k=3))
        b1, b2 = eigendecompose(lap), eigendecompose(lap)
        assert b1.basis_id == b2.basis_id
        np.testing.assert_array_equal(b1.eigenvalues, b2.eigenvalues)
        np.testing.assert_array_equal(b1.eigenvectors, b2.eigenvectors)

    def test_degenerate_ties_ordered(self):
        # Complete graph on 4 nodes: eigenvalues {0, 4, 4, 4}.
        lap = 4 * np.eye(4) - np.ones((4, 4))
        basis = eigendecompose(lap)
        np.testing.assert_allclose(basis.eigenvalues, [0, 4, 4, 4], atol=1e-12)
        cols = [tuple(basis.eigenvectors[:, j]) for j in range(1, 4)]
        assert cols == sorted(cols)

    def test_agrees_with_jacobi_reference(self, random_cloud):
        for seed in range(3):
            c = random_cloud(32, seed=40 + seed)
            lap = build_laplacian(knn_graph(c, k=4))
            basis = eigendecompose(lap)
            ref_vals, ref_vecs = jacobi_eigh(lap)
            np.testing.assert_allclose(basis.eigenvalues, ref_vals, atol=1e-6)
            # Where the spectrum is simple, the two bases must agree up to sign.
            gaps = np.diff(basis.eigenvalues)
            for j in range(len(basis.eigenvalues)):
                isolated = ((j == 0 or gaps[j - 1] > 1e-6)
                            and (j == len(gaps) or gaps[j] > 1e-6))
                if isolated:
                    dot = abs(basis.eigenvectors[:, j] @ ref_vecs[:, j])
                    assert dot == pytest.approx(1.0, abs=1e-6)

    def test_asymmetric_rejected(self):
        m = np.array([[0.0, 1.0], [0.5, 0.0]])
        with pytest.raises(NonSymmetricMatrixError):
            eigendecompose(m)


class TestConnectivity:
    def test_connected_has_one_zero(self, sphere_cloud):
        basis = cloud_basis(sphere_cloud(64, seed=50), k=8)
        assert int(np.sum(basis.eigenvalues < 1e-8)) == 1

    def test_disconnected_warns(self):
        rng = np.random.default_rng(51)
        a = rng.normal(size=(12, 3)) * 0.1
        b = rng.normal(size=(12, 3)) * 0.1 + 100.0
        c = PointCloud(np.vstack([a, b]))
        with pytest.warns(ConnectivityWarning):
            basis = cloud_basis(c, k=3)
        assert int(np.sum(basis.eigenvalues < 1e-8)) == 2


class TestTransforms:
    def test_two_node_coefficients(self):
        c = two_node_cloud()
        basis = cloud_basis(c, k=1)
        spec = gft(c, basis)
        np.testing.assert_allclose(spec.coeffs[:, 0],
                                   [np.sqrt(2.0), -np.sqrt(2.0)], atol=1e-14)
        np.testing.assert_allclose(spec.coeffs[:, 1:], 0.0, atol=1e-14)

    def test_roundtrip(self, random_cloud):
        for n in (16, 64):
            c = random_cloud(n, seed=n)
            basis = cloud_basis(c, k=min(10, n - 1))
            back = igft(gft(c, basis), basis)
            assert np.max(np.abs(back.points - c.points)) < 1e-10

    def test_parseval(self, random_cloud):
        c = random_cloud(48, seed=61)
        basis = cloud_basis(c, k=6)
        spec = gft(c, basis)
        sig = np.linalg.norm(c.points)
        coeff = np.linalg.norm(spec.coeffs)
        assert abs(coeff - sig) / sig < 1e-12

    def test_freq0_is_uniform_translation(self, sphere_cloud):
        c = sphere_cloud(32, seed=62)
        basis = cloud_basis(c, k=6)
        spec = gft(c, basis)
        bumped = spec.coeffs.copy()
        bumped[0, 0] += 1.0
        moved = igft(Spectrum(coeffs=bumped, basis_id=spec.basis_id), basis)
        delta = moved.points - c.points
        # A frequency-0 edit moves every point by the same vector.
        np.testing.assert_allclose(delta, np.broadcast_to(delta[0], delta.shape),
                                   rtol=0, atol=1e-12)
        np.testing.assert_allclose(delta[0], [1.0 / np.sqrt(32), 0, 0],
                                   rtol=0, atol=1e-12)

    def test_dimension_mismatch(self, random_cloud):
        c16, c32 = random_cloud(16, seed=63), random_cloud(32, seed=64)
        basis = cloud_basis(c32, k=6)
        with pytest.raises(ValueError):
            gft(c16, basis)
        with pytest.raises(ValueError):
            igft(gft(c32, basis), cloud_basis(c16, k=6))


class TestBands:
    def test_split_concat_roundtrip(self, random_cloud):
        c = random_cloud(24, seed=70)
        basis = cloud_basis(c, k=5)
        spec = gft(c, basis)
        low, high = split_bands(spec, 8)
        assert low.n == 8 and high.n == 16
        rejoined = concat_bands(low, high)
        np.testing.assert_array_equal(rejoined.coeffs, spec.coeffs)

    def test_split_bounds(self, random_cloud):
        spec = gft(random_cloud(10, seed=71),
                   cloud_basis(random_cloud(10, seed=71), k=3))
        for bad in (0, 10, 11):
            with pytest.raises(ValueError):
                split_bands(spec, bad)

    def test_concat_mismatched_bases(self, random_cloud):
        c1, c2 = random_cloud(12, seed=72), random_cloud(12, seed=73)
        s1 = gft(c1, cloud_basis(c1, k=3))
        s2 = gft(c2, cloud_basis(c2, k=3))
        lo1, _ = split_bands(s1, 4)
        _, hi2 = split_bands(s2, 4)
        with pytest.raises(ValueError):
            concat_bands(lo1, hi2)

    def test_white_noise_fraction_tracks_bandwidth(self, random_cloud):
        # Against a basis that did not come from the signal, white noise
        # spreads energy evenly and the low-band share sits near cutoff / n.
        n, cutoff = 64, 16
        basis = cloud_basis(random_cloud(n, seed=99), k=8)
        fractions = []
        for seed in range(20):
            gen = np.random.default_rng(100 + seed)
            noise = PointCloud(gen.normal(size=(n, 3)))
            fractions.append(band_energy_fraction(gft(noise, basis), cutoff))
        assert abs(np.mean(fractions) - cutoff / n) < 0.1

    def test_own_graph_concentrates_low(self):
        # On its own neighbourhood graph even a noise cloud reads as smooth:
        # edges connect spatially close points, so coordinates vary slowly
        # along them.  This is what makes the low band carry the shape.
        gen = np.random.default_rng(105)
        c = PointCloud(gen.normal(size=(64, 3)))
        basis = cloud_basis(c, k=8)
        assert band_energy_fraction(gft(c, basis), 16) > 0.8

    def test_zero_energy_rejected(self):
        spec = Spectrum(coeffs=np.zeros((8, 3)), basis_id="x")
        with pytest.raises(ValueError):
            band_energy_fraction(spec, 4)

    def test_full_cutoff_is_one(self, random_cloud):
        c = random_cloud(12, seed=80)
        spec = gft(c, cloud_basis(c, k=3))
        assert band_energy_fraction(spec, 12) == pytest.approx(1.0)
