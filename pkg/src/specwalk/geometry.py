"""Point cloud container, kNN graph construction, and perceptibility metrics.

Clouds are dense float64 arrays of shape (n, 3).  All distance measures used
for candidate ranking are one-directional, measured from the perturbed cloud
to the reference cloud; a symmetric Chamfer variant exists for cross-checks
but is never used in ranking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class DegenerateCloudError(ValueError):
    """Cloud cannot be processed (all points coincident, empty, ...)."""


class CloudShapeError(ValueError):
    """Array is not a valid (n, 3) finite point cloud."""


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable (n, 3) float64 point cloud.

    The backing array is copied on construction and marked read-only, so a
    cloud can be shared freely between the attack engine, oracles, and the
    trace without defensive copies.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise CloudShapeError(f"expected (n, 3) array, got shape {pts.shape}")
        if pts.shape[0] < 1:
            raise CloudShapeError("point cloud must contain at least one point")
        if not np.all(np.isfinite(pts)):
            raise CloudShapeError("point cloud contains non-finite coordinates")
        pts = pts.copy()
        pts.flags.writeable = False
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Undirected, symmetrized kNN graph over a point cloud.

    ``edges`` is an (m, 2) int array with i < j per row, sorted
    lexicographically, each undirected edge stored exactly once.
    """

    n: int
    k: int
    edges: np.ndarray

    @property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg


def normalize_unit_ball(cloud: PointCloud) -> PointCloud:
    """Center a cloud on its centroid and scale the farthest point to radius 1.

    Idempotent up to floating point.  Raises DegenerateCloudError when every
    point coincides with the centroid (no scale is defined).
    """
    pts = cloud.points
    centered = pts - pts.mean(axis=0)
    radius = np.linalg.norm(centered, axis=1).max()
    if radius < 1e-300:
        raise DegenerateCloudError("all points coincide; unit-ball scale undefined")
    return PointCloud(centered / radius)


def knn_graph(cloud: PointCloud, k: int) -> NeighborGraph:
    """Build the symmetrized k-nearest-neighbor graph of a cloud.

    Each point contributes edges to its k nearest neighbors (self excluded)
    and the union over directions is kept.  Distance ties are broken by the
    smaller point index, which makes the graph deterministic for a fixed
    input; exact distances are used throughout, no approximate index.

    Args:
        cloud: input cloud with at least 2 points.
        k: neighbor count, 1 <= k < n.

    Returns:
        NeighborGraph with a canonical, sorted edge array.
    """
    n = cloud.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    pts = cloud.points
    # Chunked exact pairwise distances. Stable argsort realizes the
    # lower-index tie-break without any epsilon games.
    pairs = []
    chunk = max(1, int(2**22 // max(n, 1)))
    for start in range(0, n, chunk):
        block = pts[start : start + chunk]
        d2 = ((block[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
        rows = np.arange(start, min(start + chunk, n))
        d2[rows - start, rows] = np.inf
        order = np.argsort(d2, axis=1, kind="stable")[:, :k]
        src = np.repeat(rows, k)
        dst = order.ravel()
        pairs.append(np.column_stack([src, dst]))
    directed = np.concatenate(pairs, axis=0)
    lo = np.minimum(directed[:, 0], directed[:, 1])
    hi = np.maximum(directed[:, 0], directed[:, 1])
    edges = np.unique(np.column_stack([lo, hi]), axis=0)
    return NeighborGraph(n=n, k=k, edges=edges)


def _nn_distances(adv: PointCloud, ref: PointCloud) -> np.ndarray:
    """Euclidean distance from every adv point to its nearest ref point."""
    tree = cKDTree(ref.points)
    dists, _ = tree.query(adv.points, k=1)
    return np.asarray(dists, dtype=np.float64)


def chamfer_distance(adv: PointCloud, ref: PointCloud, symmetric: bool = False) -> float:
    """Mean squared nearest-neighbor distance from adv to ref.

    Args:
        adv: perturbed cloud.
        ref: reference cloud.
        symmetric: average the two one-directional values instead.  Only for
            cross-checking; ranking always uses the one-directional form.
    """
    d = float(np.mean(_nn_distances(adv, ref) ** 2))
    if symmetric:
        d = 0.5 * (d + float(np.mean(_nn_distances(ref, adv) ** 2)))
    return d


def hausdorff_distance(adv: PointCloud, ref: PointCloud) -> float:
    """Max over adv points of nearest-neighbor distance to ref (un-squared)."""
    return float(np.max(_nn_distances(adv, ref)))


def variance_distance(adv: PointCloud, ref: PointCloud) -> float:
    """Population variance of the adv-to-ref nearest-neighbor distances.

    Low variance means the perturbation is spread evenly, which reads as
    smoother to a human than a few large spikes.
    """
    d = _nn_distances(adv, ref)
    return float(np.var(d))


def l2_norm_distance(a: PointCloud, b: PointCloud) -> float:
    """Frobenius norm of the coordinate difference; requires equal counts."""
    if a.n != b.n:
        raise ValueError(f"clouds must have equal point counts, got {a.n} and {b.n}")
    return float(np.linalg.norm(a.points - b.points))


def max_pointwise_deviation(a: PointCloud, b: PointCloud) -> float:
    """Largest per-index displacement between two index-aligned clouds."""
    if a.n != b.n:
        raise ValueError(f"clouds must have equal point counts, got {a.n} and {b.n}")
    return float(np.linalg.norm(a.points - b.points, axis=1).max())


def combined_distance(candidate: PointCloud, source: PointCloud,
                      gamma1: float = 2.0, gamma2: float = 0.5) -> float:
    """Ranking objective: Chamfer + gamma1 * Hausdorff + gamma2 * variance.

    All three components are measured one-directionally from the candidate to
    the source, so adding points near the source surface is never rewarded.
    """
    if gamma1 < 0 or gamma2 < 0:
        raise ValueError("distance weights must be non-negative")
    d = _nn_distances(candidate, source)
    return float(np.mean(d**2) + gamma1 * np.max(d) + gamma2 * np.var(d))
