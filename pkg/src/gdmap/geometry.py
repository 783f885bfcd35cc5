"""Point-cloud primitives: validation, exact nearest-neighbour index, FPS, voxels.

A point cloud is a float64 ``(n, 3)`` array. Row order is meaningful and is
only changed by explicit resampling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyInput, InvalidArgument


def as_cloud(points, *, allow_empty: bool = True) -> np.ndarray:
    """Coerce ``points`` to a finite float64 ``(n, 3)`` array."""
    arr = np.asarray(points, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 3)
    if arr.ndim == 1 and arr.shape[0] == 3:
        arr = arr.reshape(1, 3)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise InvalidArgument(f"expected an (n, 3) point array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument("point cloud contains NaN or Inf coordinates")
    if not allow_empty and arr.shape[0] == 0:
        raise EmptyInput("point cloud is empty")
    return arr


class SpatialIndex:
    """Immutable exact nearest-neighbour / radius index over a point cloud.

    Backed by a k-d tree; exact ties on the nearest distance resolve to the
    lowest point index.
    """

    def __init__(self, cloud):
        pts = as_cloud(cloud, allow_empty=False).copy()
        pts.setflags(write=False)
        self._points = pts
        self._tree = cKDTree(pts)

    @property
    def points(self) -> np.ndarray:
        return self._points

    def __len__(self) -> int:
        return self._points.shape[0]

    def nearest(self, queries) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indices, distances)`` of the nearest indexed point per query."""
        q = as_cloud(queries)
        n = len(self)
        if q.shape[0] == 0:
            return np.zeros(0, dtype=np.int64), np.zeros(0)
        if n == 1:
            idx = np.zeros(q.shape[0], dtype=np.int64)
        else:
            d, i = self._tree.query(q, k=2)
            idx = i[:, 0].astype(np.int64)
            # only rows with an exact tie need the slow path
            for row in np.flatnonzero(d[:, 1] <= d[:, 0]):
                cand = np.asarray(
                    self._tree.query_ball_point(q[row], d[row, 0] * (1 + 1e-12) + 1e-300),
                    dtype=np.int64,
                )
                cand.sort()
                dist = np.sqrt(((self._points[cand] - q[row]) ** 2).sum(axis=1))
                idx[row] = cand[np.argmin(dist)]
        dist = np.sqrt(((self._points[idx] - q) ** 2).sum(axis=1))
        return idx, dist

    def knn(self, queries, k: int) -> tuple[np.ndarray, np.ndarray]:
        """k nearest neighbours as ``(indices, distances)``, each ``(m, k)``."""
        if not 1 <= k <= len(self):
            raise InvalidArgument(f"k={k} outside [1, {len(self)}]")
        d, i = self._tree.query(as_cloud(queries), k=k)
        return np.asarray(i, dtype=np.int64).reshape(-1, k), np.asarray(d).reshape(-1, k)

    def within(self, query, radius: float) -> np.ndarray:
        """Sorted indices of points with distance <= radius from ``query``."""
        q = as_cloud(query)[0]
        out = np.asarray(self._tree.query_ball_point(q, radius), dtype=np.int64)
        out.sort()
        return out


def build_index(cloud) -> SpatialIndex:
    return SpatialIndex(cloud)


def farthest_point_sample(cloud, k: int, start_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; returns ``k`` distinct indices.

    Each pick maximises the distance to the already selected set. Ties go to
    the lowest index.
    """
    pts = as_cloud(cloud)
    n = pts.shape[0]
    if n == 0:
        raise EmptyInput("cannot sample from an empty cloud")
    if not 1 <= k <= n:
        raise InvalidArgument(f"k={k} must satisfy 1 <= k <= n={n}")
    if not 0 <= start_index < n:
        raise InvalidArgument(f"start_index={start_index} out of range for n={n}")

    selected = np.empty(k, dtype=np.int64)
    selected[0] = start_index
    mind = np.sqrt(((pts - pts[start_index]) ** 2).sum(axis=1))
    mind[start_index] = -1.0  # never re-pick, even when duplicates leave all zeros
    for j in range(1, k):
        nxt = int(np.argmax(mind))
        selected[j] = nxt
        d = np.sqrt(((pts - pts[nxt]) ** 2).sum(axis=1))
        np.minimum(mind, d, out=mind)
        mind[selected[: j + 1]] = -1.0
    return selected


@dataclass(frozen=True)
class VoxelSet:
    resolution: float
    occupied: frozenset

    def __len__(self) -> int:
        return len(self.occupied)


def voxel_cells(cloud, resolution: float) -> np.ndarray:
    """Unique integer cell coordinates (sorted rows) of occupied voxels."""
    if not resolution > 0:
        raise InvalidArgument(f"resolution must be > 0, got {resolution}")
    pts = as_cloud(cloud)
    cells = np.floor(pts / resolution).astype(np.int64)
    if cells.shape[0] == 0:
        return cells
    return np.unique(cells, axis=0)


def voxelize(cloud, resolution: float) -> VoxelSet:
    cells = voxel_cells(cloud, resolution)
    return VoxelSet(float(resolution), frozenset(map(tuple, cells.tolist())))
