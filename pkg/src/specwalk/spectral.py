"""Graph Fourier analysis of point clouds.

The spectral view treats each xyz channel as a scalar signal on the kNN
graph.  Frequencies are eigenvalues of the combinatorial Laplacian L = D - A;
the transform projects coordinates onto the orthonormal eigenbasis.  Low
frequencies carry the overall shape, high frequencies carry fine detail, so
band-wise edits give independent control over the two.
"""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .geometry import NeighborGraph, PointCloud, knn_graph

_ZERO_EIGENVALUE_TOL = 1e-8
_SIGN_TOL = 1e-12


class NonSymmetricMatrixError(ValueError):
    """Input matrix is not symmetric within tolerance."""


class EigendecompositionError(RuntimeError):
    """The dense symmetric eigensolver failed to converge."""


class ConnectivityWarning(UserWarning):
    """The kNN graph has more than one connected component."""


@dataclass(frozen=True, eq=False)
class SpectralBasis:
    """Orthonormal Laplacian eigenbasis with ascending eigenvalues.

    Column j of ``eigenvectors`` belongs to ``eigenvalues[j]``.  Signs are
    canonical: the first component of each column with magnitude above 1e-12
    is positive, so repeated decompositions of one matrix agree bitwise.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    basis_id: str

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Per-frequency xyz coefficients, rows ordered by ascending frequency."""

    coeffs: np.ndarray
    basis_id: str

    @property
    def n(self) -> int:
        return self.coeffs.shape[0]


def build_laplacian(graph: NeighborGraph, edge_weights: np.ndarray | None = None) -> np.ndarray:
    """Dense combinatorial Laplacian L = D - A of a neighbor graph.

    Args:
        graph: symmetrized kNN graph.
        edge_weights: optional positive weight per edge row; defaults to the
            unweighted graph (all ones).
    """
    n = graph.n
    i, j = graph.edges[:, 0], graph.edges[:, 1]
    if edge_weights is None:
        w = np.ones(len(graph.edges))
    else:
        w = np.asarray(edge_weights, dtype=np.float64)
        if w.shape != (len(graph.edges),):
            raise ValueError("edge_weights must align with the edge array")
        if np.any(w <= 0):
            raise ValueError("edge weights must be positive")
    lap = np.zeros((n, n))
    lap[i, j] = -w
    lap[j, i] = -w
    lap[np.arange(n), np.arange(n)] = -lap.sum(axis=1)
    return lap


def _canonical_signs(vecs: np.ndarray) -> np.ndarray:
    # First component per column with |x| > tol decides the sign.
    n = vecs.shape[0]
    flipped = vecs.copy()
    for col in range(vecs.shape[1]):
        v = flipped[:, col]
        idx = np.argmax(np.abs(v) > _SIGN_TOL)
        if np.abs(v[idx]) > _SIGN_TOL and v[idx] < 0:
            flipped[:, col] = -v
    return flipped


def _order_ties(vals: np.ndarray, vecs: np.ndarray, tie_tol: float) -> tuple[np.ndarray, np.ndarray]:
    # Within a group of numerically equal eigenvalues, order columns by the
    # lexicographic order of their (sign-normalized) components.
    n = len(vals)
    order = list(range(n))
    start = 0
    while start < n:
        stop = start + 1
        while stop < n and vals[stop] - vals[stop - 1] <= tie_tol:
            stop += 1
        if stop - start > 1:
            group = sorted(order[start:stop], key=lambda c: tuple(vecs[:, c]))
            order[start:stop] = group
        start = stop
    order = np.asarray(order)
    return vals[order], vecs[:, order]


def eigendecompose(matrix: np.ndarray, tie_tol: float = 1e-10) -> SpectralBasis:
    """Full symmetric eigendecomposition with a reproducible basis.

    Eigenvalues come back ascending; eigenvectors are orthonormal columns
    with canonical signs, and exact eigenvalue ties are ordered by the
    eigenvectors' lexicographic order so two runs on the same matrix agree
    bitwise.

    Args:
        matrix: symmetric (n, n) array; asymmetry above 1e-9 is rejected.
        tie_tol: eigenvalue gap below which two eigenvalues count as tied.

    Raises:
        NonSymmetricMatrixError: input is not symmetric.
        EigendecompositionError: the LAPACK solver did not converge.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise NonSymmetricMatrixError(f"expected square matrix, got shape {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if m.size else 0.0
    if asym > 1e-9:
        raise NonSymmetricMatrixError(f"matrix asymmetry {asym:.3e} exceeds 1e-9")
    try:
        vals, vecs = scipy.linalg.eigh(m)
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - hard to trigger
        raise EigendecompositionError(f"symmetric eigensolver failed: {exc}") from exc
    vecs = _canonical_signs(vecs)
    vals, vecs = _order_ties(vals, vecs, tie_tol)
    vecs = np.ascontiguousarray(vecs)
    digest = hashlib.blake2b(vals.tobytes() + vecs.tobytes(), digest_size=8).hexdigest()
    return SpectralBasis(eigenvalues=vals, eigenvectors=vecs, basis_id=digest)


def cloud_basis(cloud: PointCloud, k: int, weighting: str = "unweighted") -> SpectralBasis:
    """Spectral basis of a cloud's kNN graph.

    ``weighting`` selects the Laplacian flavor: "unweighted" (the default
    used everywhere in the attack) or "gaussian", which weights each edge by
    exp(-d^2 / (2 sigma^2)) with sigma the mean edge length.  Emits a
    ConnectivityWarning when the graph is disconnected; the decomposition is
    still valid, there is just one zero frequency per component.
    """
    graph = knn_graph(cloud, k)
    if weighting == "unweighted":
        weights = None
    elif weighting == "gaussian":
        diffs = cloud.points[graph.edges[:, 0]] - cloud.points[graph.edges[:, 1]]
        lengths = np.linalg.norm(diffs, axis=1)
        sigma = float(lengths.mean())
        if sigma < 1e-300:
            raise ValueError("all graph edges have zero length")
        weights = np.exp(-(lengths**2) / (2.0 * sigma**2))
    else:
        raise ValueError(f"unknown weighting {weighting!r}")
    basis = eigendecompose(build_laplacian(graph, weights))
    n_components = int(np.sum(basis.eigenvalues < _ZERO_EIGENVALUE_TOL))
    if n_components > 1:
        warnings.warn(
            f"kNN graph has {n_components} connected components",
            ConnectivityWarning,
            stacklevel=2,
        )
    return basis


def gft(cloud: PointCloud, basis: SpectralBasis) -> Spectrum:
    """Project cloud coordinates onto the eigenbasis, one row per frequency."""
    if cloud.n != basis.n:
        raise ValueError(f"cloud has {cloud.n} points but basis dimension is {basis.n}")
    return Spectrum(coeffs=basis.eigenvectors.T @ cloud.points, basis_id=basis.basis_id)


def igft(spectrum: Spectrum, basis: SpectralBasis) -> PointCloud:
    """Synthesize coordinates from spectral coefficients.

    The basis only needs to match in dimension, not identity: fused spectra
    deliberately mix coefficients from two clouds and are inverted with the
    source cloud's basis.
    """
    if spectrum.n != basis.n:
        raise ValueError(f"spectrum has {spectrum.n} rows but basis dimension is {basis.n}")
    return PointCloud(basis.eigenvectors @ spectrum.coeffs)


def split_bands(spectrum: Spectrum, cutoff: int) -> tuple[Spectrum, Spectrum]:
    """Split rows into the low band [0, cutoff) and high band [cutoff, n)."""
    if not 0 < cutoff < spectrum.n:
        raise ValueError(f"cutoff must lie strictly inside (0, {spectrum.n}), got {cutoff}")
    low = Spectrum(coeffs=spectrum.coeffs[:cutoff], basis_id=spectrum.basis_id)
    high = Spectrum(coeffs=spectrum.coeffs[cutoff:], basis_id=spectrum.basis_id)
    return low, high


def concat_bands(low: Spectrum, high: Spectrum) -> Spectrum:
    """Rejoin band slices; inverse of split_bands for matching basis ids."""
    if low.basis_id != high.basis_id:
        raise ValueError("band slices come from different bases")
    return Spectrum(coeffs=np.vstack([low.coeffs, high.coeffs]), basis_id=low.basis_id)


def band_energy_fraction(spectrum: Spectrum, cutoff: int) -> float:
    """Fraction of total squared-coefficient energy in the low band."""
    if not 0 < cutoff <= spectrum.n:
        raise ValueError(f"cutoff must lie in (0, {spectrum.n}], got {cutoff}")
    total = float(np.sum(spectrum.coeffs**2))
    if total < 1e-300:
        raise ValueError("spectrum carries no energy")
    return float(np.sum(spectrum.coeffs[:cutoff] ** 2)) / total
