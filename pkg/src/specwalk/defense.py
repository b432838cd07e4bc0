"""Input-side point cloud defenses: statistical outlier removal and random
subsampling.

A defense runs inside the oracle, invisible to the attacker: the wrapped
oracle filters every query cloud before classification, and queries still
count exactly once on the shared ledger.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud
from .oracle import HardLabelOracle, OracleError


class DefenseAnnihilationError(OracleError):
    """The filter removed every point, leaving nothing to classify."""


@dataclass(frozen=True)
class DefenseConfig:
    """Which filter to apply and with what parameters.

    kind "sor": remove points whose mean distance to their sor_k nearest
    neighbors exceeds the global mean by more than sor_alpha standard
    deviations.  kind "srs": drop floor(srs_drop_ratio * n) points chosen
    uniformly without replacement.  ``seed`` is the run-level seed; the
    per-cloud subsampling seed is derived from it and the cloud bytes so a
    given cloud is always filtered the same way within a run.
    """

    kind: str
    sor_k: int = 2
    sor_alpha: float = 1.1
    srs_drop_ratio: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("sor", "srs"):
            raise ValueError(f"unknown defense kind {self.kind!r}")
        if self.kind == "sor" and self.sor_k < 1:
            raise ValueError("sor_k must be at least 1")
        if self.kind == "srs" and not 0.0 < self.srs_drop_ratio < 1.0:
            raise ValueError("srs_drop_ratio must lie strictly between 0 and 1")


def sor_filter(cloud: PointCloud, k: int = 2, alpha: float = 1.1) -> PointCloud:
    """Statistical outlier removal.

    Computes each point's mean distance to its k nearest neighbors (self
    excluded) and removes points strictly above mean + alpha * std of those
    values, std taken over the whole cloud.  Surviving points keep their
    original order.
    """
    n = cloud.n
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n, got k={k}, n={n}")
    tree = cKDTree(cloud.points)
    dists, _ = tree.query(cloud.points, k=k + 1)
    mean_knn = dists[:, 1:].mean(axis=1)
    threshold = mean_knn.mean() + alpha * mean_knn.std()
    keep = mean_knn <= threshold
    if not np.any(keep):
        raise DefenseAnnihilationError("SOR removed every point")
    return PointCloud(cloud.points[keep])


def srs_filter(cloud: PointCloud, drop_ratio: float, seed: int) -> PointCloud:
    """Simple random subsampling: drop exactly floor(drop_ratio * n) points.

    The drop set comes from a seeded generator, so the same (cloud, seed)
    always yields the same survivors, in original order.
    """
    if not 0.0 < drop_ratio < 1.0:
        raise ValueError("drop_ratio must lie strictly between 0 and 1")
    n = cloud.n
    drop = int(np.floor(drop_ratio * n))
    if drop >= n:
        raise DefenseAnnihilationError("SRS would drop every point")
    if drop == 0:
        return cloud
    rng = np.random.default_rng(seed)
    dropped = rng.choice(n, size=drop, replace=False)
    keep = np.setdiff1d(np.arange(n), dropped)
    return PointCloud(cloud.points[keep])


def _cloud_seed(cloud: PointCloud, base_seed: int) -> int:
    # Stable across processes, unlike hash(); ties the drop pattern to the
    # exact cloud bytes so repeated queries of one cloud agree.
    digest = hashlib.blake2b(
        cloud.points.tobytes() + int(base_seed).to_bytes(8, "little", signed=True),
        digest_size=8,
    ).digest()
    return int.from_bytes(digest, "little")


def apply_defense(cloud: PointCloud, config: DefenseConfig) -> PointCloud:
    """Run the configured filter on one cloud."""
    if config.kind == "sor":
        return sor_filter(cloud, k=config.sor_k, alpha=config.sor_alpha)
    return srs_filter(cloud, config.srs_drop_ratio, _cloud_seed(cloud, config.seed))


class DefendedOracle(HardLabelOracle):
    """Oracle wrapper that filters every query before classification.

    Shares the inner oracle's ledger, so a defended query costs exactly one
    query.  Filter failures (everything removed) surface as oracle errors.
    """

    def __init__(self, inner: HardLabelOracle, config: DefenseConfig):
        self.inner = inner
        self.config = config
        self.concurrent_safe = inner.concurrent_safe
        self.name = f"{inner.name}+{config.kind}"
        super().__init__(class_count=inner.class_count, ledger=inner.ledger)

    def _classify(self, cloud: PointCloud) -> int:
        filtered = apply_defense(cloud, self.config)
        return self.inner._classify(filtered)


def defended_oracle(inner: HardLabelOracle, config: DefenseConfig) -> DefendedOracle:
    """Wrap ``inner`` so every query is filtered by ``config`` first."""
    return DefendedOracle(inner, config)
