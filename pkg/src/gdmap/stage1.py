"""Stage 1: path -> central points -> initial noisy map.

Widths come from one of three modes: a fixed width, a random width per path
point, or a width measured against a handful of sparse hits.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.spatial import cKDTree

from .diffusion import init_noisy_map  # noqa: F401  (part of the stage-1 surface)
from .errors import DegenerateTangent, EmptyInput, InvalidArgument
from .geometry import as_cloud

DEFAULT_WIDTH = 20.0
DEFAULT_WIDTH_RANGE = (15.0, 35.0)
DEFAULT_DEDUP_RADIUS = 0.5
DEFAULT_WIDTH_CAP = 50.0


@dataclass(frozen=True)
class PathTrack:
    points: np.ndarray
    tangents: np.ndarray  # unit 3D
    normals: np.ndarray  # unit, horizontal, left of travel

    def __len__(self) -> int:
        return self.points.shape[0]


def resample_path(points, spacing: float = 1.0) -> np.ndarray:
    """Resample a polyline at (near) uniform arc-length steps.

    Consecutive duplicate poses are dropped first. The step is adjusted so the
    last original point is kept exactly.
    """
    pts = as_cloud(points)
    if spacing <= 0:
        raise InvalidArgument("spacing must be positive")
    keep = np.ones(pts.shape[0], dtype=bool)
    keep[1:] = np.any(np.diff(pts, axis=0) != 0, axis=1)
    pts = pts[keep]
    if pts.shape[0] < 2:
        raise InvalidArgument("path needs at least two distinct points")
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    n_steps = max(1, int(round(s[-1] / spacing)))
    s_new = np.linspace(0.0, s[-1], n_steps + 1)
    return np.stack([np.interp(s_new, s, pts[:, i]) for i in range(3)], axis=1)


def horizontal_headings(track: PathTrack) -> np.ndarray:
    """Unit horizontal travel direction at every path point."""
    return np.stack([track.normals[:, 1], -track.normals[:, 0], np.zeros(len(track))], axis=1)


def arc_length(points) -> np.ndarray:
    pts = as_cloud(points)
    if pts.shape[0] == 0:
        return np.zeros(0)
    return np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))])


def estimate_tangents_normals(path_points) -> PathTrack:
    """Central-difference tangents (one-sided at the ends) and left-hand normals."""
    pts = as_cloud(path_points)
    if pts.shape[0] < 2:
        raise InvalidArgument("a path needs at least two points")
    if np.any(np.all(np.diff(pts, axis=0) == 0, axis=1)):
        raise InvalidArgument("consecutive path points must differ")
    tan = np.empty_like(pts)
    tan[0] = pts[1] - pts[0]
    tan[-1] = pts[-1] - pts[-2]
    tan[1:-1] = pts[2:] - pts[:-2]
    horiz = np.hypot(tan[:, 0], tan[:, 1])
    scale = np.linalg.norm(tan, axis=1)
    bad = horiz <= 1e-12 * np.maximum(scale, 1.0)
    if np.any(bad):
        raise DegenerateTangent(
            f"path point {int(np.argmax(bad))} has a vertical tangent; normal undefined"
        )
    normals = np.zeros_like(pts)
    normals[:, 0] = -tan[:, 1] / horiz
    normals[:, 1] = tan[:, 0] / horiz
    return PathTrack(pts, tan / scale[:, None], normals)


def dedup_points(points, radius: float) -> np.ndarray:
    """Indices kept by a greedy first-come pass removing points closer than ``radius``."""
    pts = as_cloud(points)
    n = pts.shape[0]
    if radius <= 0 or n < 2:
        return np.arange(n)
    pairs = cKDTree(pts).query_pairs(radius, output_type="ndarray")
    if pairs.size:
        d = np.linalg.norm(pts[pairs[:, 0]] - pts[pairs[:, 1]], axis=1)
        pairs = pairs[d < radius]
    if pairs.size == 0:
        return np.arange(n)
    pairs = np.sort(pairs, axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    starts = np.searchsorted(pairs[:, 0], np.arange(n + 1))
    removed = np.zeros(n, dtype=bool)
    for i in range(n):
        if not removed[i]:
            removed[pairs[starts[i] : starts[i + 1], 1]] = True
    return np.flatnonzero(~removed)


def centers_from_path(track: PathTrack, widths, dedup_radius: float = DEFAULT_DEDUP_RADIUS,
                      return_source: bool = False):
    """Emit each path point plus points every metre along +/- its normal up to its width.

    With ``return_source`` also return, per centre, the index of the path
    point that emitted it.
    """
    w = np.broadcast_to(np.asarray(widths, dtype=np.float64), (len(track),))
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise InvalidArgument("widths must be finite and non-negative")
    reach = np.floor(w).astype(np.int64)
    chunks = []
    for i in range(len(track)):
        k = np.arange(-reach[i], reach[i] + 1, dtype=np.float64)
        chunks.append(track.points[i] + k[:, None] * track.normals[i])
    centers = np.concatenate(chunks, axis=0)
    keep = dedup_points(centers, dedup_radius)
    if return_source:
        source = np.repeat(np.arange(len(track)), 2 * reach + 1)
        return centers[keep], source[keep]
    return centers[keep]


def estimate_width(track: PathTrack, point_index: int, hits) -> float:
    """Smallest distance from a hit to the tangent line through the path point."""
    h = as_cloud(hits)
    if h.shape[0] == 0:
        raise EmptyInput("no sparse hits to measure width from")
    return float(_line_distances(track.points[point_index], track.tangents[point_index], h).min())


def _line_distances(origin, direction, pts) -> np.ndarray:
    return np.linalg.norm(np.cross(pts - origin, direction), axis=-1)


def estimate_widths(track: PathTrack, hits) -> np.ndarray:
    """``estimate_width`` for every path point at once."""
    h = as_cloud(hits)
    if h.shape[0] == 0:
        raise EmptyInput("no sparse hits to measure width from")
    rel = h[None, :, :] - track.points[:, None, :]
    d = np.linalg.norm(np.cross(rel, track.tangents[:, None, :]), axis=-1)
    return d.min(axis=1)


@dataclass(frozen=True)
class Mode1:
    w: float = DEFAULT_WIDTH

    def __post_init__(self):
        if not self.w > 0:
            raise InvalidArgument("Mode 1 width must be > 0")


@dataclass(frozen=True)
class Mode2:
    low: float = DEFAULT_WIDTH_RANGE[0]
    high: float = DEFAULT_WIDTH_RANGE[1]

    def __post_init__(self):
        if not 0 < self.low <= self.high < np.inf:
            raise InvalidArgument("Mode 2 needs 0 < low <= high < inf")


@dataclass(frozen=True)
class Mode3:
    hits: np.ndarray
    cap: float = DEFAULT_WIDTH_CAP

    def __post_init__(self):
        h = as_cloud(self.hits)
        if h.shape[0] == 0:
            raise EmptyInput("Mode 3 needs at least one sparse hit")
        object.__setattr__(self, "hits", h)


GenerationMode = Union[Mode1, Mode2, Mode3]


def make_mode_widths(mode: GenerationMode, track: PathTrack, rng_seed: int = 0) -> np.ndarray:
    n = len(track)
    if isinstance(mode, Mode1):
        return np.full(n, float(mode.w))
    if isinstance(mode, Mode2):
        return np.random.default_rng(rng_seed).uniform(mode.low, mode.high, size=n)
    if isinstance(mode, Mode3):
        return np.minimum(estimate_widths(track, mode.hits), mode.cap)
    raise InvalidArgument(f"unknown generation mode {mode!r}")
