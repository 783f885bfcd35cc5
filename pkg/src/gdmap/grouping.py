"""Partition a map into groups around central points and move between frames.

World frame: absolute map coordinates. Group frame: a point minus the centre
of the group that owns it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .errors import DegenerateGroup, EmptyInput, InvalidArgument
from .geometry import SpatialIndex, as_cloud


def check_headings(headings, m: int) -> Optional[np.ndarray]:
    if headings is None:
        return None
    h = np.asarray(headings, dtype=np.float64)
    if h.shape != (m, 3) or not np.all(np.isfinite(h)):
        raise InvalidArgument(f"headings must be a finite ({m}, 3) array, got shape {h.shape}")
    return h


@dataclass(frozen=True)
class GroupedMap:
    """A parent cloud split into ``m`` groups by a per-point label.

    ``centers[i]`` is the anchor of group ``i``. Groups may be empty when the
    centres were synthesised rather than derived from the points. ``headings``
    optionally holds the unit horizontal path direction each centre came from.
    """

    parent: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    headings: Optional[np.ndarray] = None

    def __post_init__(self):
        parent = as_cloud(self.parent)
        centers = as_cloud(self.centers)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if centers.shape[0] == 0:
            raise EmptyInput("a grouped map needs at least one group")
        if labels.shape[0] != parent.shape[0]:
            raise InvalidArgument("one label per parent point is required")
        if labels.size and (labels.min() < 0 or labels.max() >= centers.shape[0]):
            raise InvalidArgument("label refers to a non-existent group")
        object.__setattr__(self, "parent", parent)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "headings", check_headings(self.headings, centers.shape[0]))

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def n(self) -> int:
        return self.parent.shape[0]

    @cached_property
    def order(self) -> np.ndarray:
        """Parent indices in group-major order (stable within a group)."""
        return np.argsort(self.labels, kind="stable")

    @cached_property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.m)

    @property
    def groups(self) -> list[np.ndarray]:
        bounds = np.concatenate([[0], np.cumsum(self.sizes)])
        return [self.order[bounds[i] : bounds[i + 1]] for i in range(self.m)]

    def with_centers(self, centers) -> "GroupedMap":
        """Same partition, new anchors (headings are kept per group)."""
        return GroupedMap(self.parent, self.labels, centers, self.headings)


def assign_groups(cloud, centers, headings=None) -> GroupedMap:
    """Voronoi assignment: each point joins its nearest centre (ties -> lowest index)."""
    pts = as_cloud(cloud, allow_empty=False)
    ctr = as_cloud(centers)
    if ctr.shape[0] == 0:
        raise EmptyInput("no centres to assign to")
    labels, _ = SpatialIndex(ctr).nearest(pts)
    return GroupedMap(pts, labels, ctr, headings)


def group_centroids(grouped: GroupedMap) -> np.ndarray:
    """Arithmetic mean of each group's points, shape ``(m, 3)``."""
    sizes = grouped.sizes
    if np.any(sizes == 0):
        raise DegenerateGroup(f"group {int(np.argmin(sizes))} is empty")
    sums = np.zeros((grouped.m, 3))
    np.add.at(sums, grouped.labels, grouped.parent)
    return sums / sizes[:, None]


def recenter(grouped: GroupedMap) -> GroupedMap:
    """Replace the anchors with the data centroids of each group."""
    return grouped.with_centers(group_centroids(grouped))


@dataclass(frozen=True)
class NormalizedGroups:
    """Per-group point sets in group frame, with their centres."""

    offsets: list
    centers: np.ndarray

    def __post_init__(self):
        if len(self.offsets) != len(self.centers):
            raise InvalidArgument(
                f"{len(self.offsets)} groups but {len(self.centers)} centres"
            )


def normalize(grouped: GroupedMap) -> NormalizedGroups:
    offsets = [grouped.parent[idx] - grouped.centers[i] for i, idx in enumerate(grouped.groups)]
    return NormalizedGroups(offsets, grouped.centers.copy())


def denormalize(normalized: NormalizedGroups) -> np.ndarray:
    """Back to world frame, group-major then in-group order."""
    centers = as_cloud(normalized.centers)
    if len(normalized.offsets) != centers.shape[0]:
        raise InvalidArgument("groups and centres differ in length")
    parts = [as_cloud(g) + centers[i] for i, g in enumerate(normalized.offsets)]
    if not parts:
        return np.zeros((0, 3))
    return np.concatenate(parts, axis=0)
