"""Shared fixtures: deterministic cloud factories."""
from __future__ import annotations

import numpy as np
import pytest

from specwalk.geometry import PointCloud


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_cloud():
    def make(n: int, seed: int = 0, scale: float = 1.0) -> PointCloud:
        gen = np.random.default_rng(seed)
        return PointCloud(scale * gen.normal(size=(n, 3)))
    return make


@pytest.fixture
def sphere_cloud():
    def make(n: int, seed: int = 0) -> PointCloud:
        gen = np.random.default_rng(seed)
        d = gen.normal(size=(n, 3))
        return PointCloud(d / np.linalg.norm(d, axis=1, keepdims=True))
    return make


@pytest.fixture
def grid_cloud():
    # Power-of-two spacing keeps every pairwise gap exactly representable,
    # so "all grid distances are equal" holds bitwise, not just approximately.
    def make(side: int = 6, spacing: float = 0.125) -> PointCloud:
        xs = np.arange(side) * spacing
        gx, gy = np.meshgrid(xs, xs, indexing="ij")
        pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(side * side)])
        return PointCloud(pts)
    return make
