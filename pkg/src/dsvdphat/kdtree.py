"""Exact nearest-neighbour search: a k-d tree and a linear scan.

Both backends return the lowest index among exactly tied nearest points, so
they are interchangeable behind :func:`make_searcher`.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree


class LinearScan:
    def __init__(self, points: np.ndarray):
        self.points = np.ascontiguousarray(points, dtype=np.float64)

    def query(self, x: np.ndarray) -> tuple[int, float]:
        d = np.sum((self.points - x) ** 2, axis=1)
        q = int(np.argmin(d))
        return q, float(d[q])


class KDTree:
    """Exact k-d tree (scipy's cKDTree) with lowest-index tie breaking.

    When the two nearest tree distances are within rounding of each other,
    every point in that shell is rescored with the same arithmetic as
    :class:`LinearScan` so both backends agree exactly.
    """

    TIE_RTOL = 1e-9

    def __init__(self, points: np.ndarray, leaf_size: int = 32):
        self.points = np.ascontiguousarray(points, dtype=np.float64)
        self.leaf_size = max(1, int(leaf_size))
        self.tree = cKDTree(self.points, leafsize=self.leaf_size, balanced_tree=True, compact_nodes=True)

    def query(self, x: np.ndarray) -> tuple[int, float]:
        x = np.asarray(x, dtype=np.float64)
        if len(self.points) == 1:
            return 0, float(np.sum((self.points[0] - x) ** 2))
        dist, idx = self.tree.query(x, k=2)
        if dist[1] > dist[0] * (1 + self.TIE_RTOL) + 1e-12:
            q = int(idx[0])
            return q, float(np.sum((self.points[q] - x) ** 2))
        cand = np.array(sorted(self.tree.query_ball_point(x, dist[1] * (1 + self.TIE_RTOL) + 1e-12)))
        d = np.sum((self.points[cand] - x) ** 2, axis=1)
        j = int(np.argmin(d))  # first minimum, and cand is sorted
        return int(cand[j]), float(d[j])


BACKENDS = ("kdtree", "linear")


def make_searcher(points: np.ndarray, backend: str = "kdtree", leaf_size: int = 32):
    if backend == "kdtree":
        return KDTree(points, leaf_size)
    if backend == "linear":
        return LinearScan(points)
    raise ValueError(f"unknown search backend {backend!r}; expected one of {BACKENDS}")
