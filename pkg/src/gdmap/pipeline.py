"""Glue between stage 1, the grouped diffusion and the denoiser."""

from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset.synthetic import ShapeSpec, synth_shape
from .diffusion import Denoiser, NoiseSchedule, NoisyMapState, denoise_chain, init_noisy_map
from .errors import EmptyInput
from .grouping import GroupedMap, assign_groups, recenter
from .stage1 import (
    DEFAULT_DEDUP_RADIUS,
    GenerationMode,
    PathTrack,
    centers_from_path,
    estimate_tangents_normals,
    horizontal_headings,
    make_mode_widths,
    resample_path,
)


def derive_seed(root: int, name: str) -> int:
    """Independent, stable sub-seed for a named subsystem."""
    ss = np.random.SeedSequence(entropy=int(root), spawn_key=(zlib.crc32(name.encode()),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def path_track(path_points, spacing: float = 1.0) -> PathTrack:
    return estimate_tangents_normals(resample_path(path_points, spacing))


def training_map(cloud, path_points, width, dedup_radius: float = DEFAULT_DEDUP_RADIUS,
                 centroids: bool = False) -> GroupedMap:
    """Group a ground-truth cloud around the stage-1 centres of its path.

    By default the stage-1 centres stay as group anchors so training sees the
    same frames as generation; ``centroids=True`` re-anchors every group at
    the mean of its points instead (empty groups are dropped first).
    """
    track = path_track(path_points)
    centers, src = centers_from_path(track, width, dedup_radius, return_source=True)
    headings = horizontal_headings(track)[src]
    grouped = assign_groups(cloud, centers, headings)
    if centroids:
        keep = grouped.sizes > 0
        grouped = recenter(assign_groups(cloud, centers[keep], headings[keep]))
    return grouped


def mean_points_per_group(dataset: Sequence[GroupedMap]) -> int:
    sizes = np.concatenate([g.sizes for g in dataset])
    sizes = sizes[sizes > 0]
    if sizes.size == 0:
        raise EmptyInput("no populated groups in the training set")
    return max(1, int(round(float(sizes.mean()))))


@dataclass
class Generated:
    cloud: np.ndarray
    initial: np.ndarray
    centers: np.ndarray
    widths: np.ndarray


def generate_map(
    path_points,
    mode: GenerationMode,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    points_per_group: int,
    seed: int,
    dedup_radius: float = DEFAULT_DEDUP_RADIUS,
) -> Generated:
    """Stage 1 (centres + P_T) followed by stage 2 (reverse chain to P_0)."""
    track = path_track(path_points)
    widths = make_mode_widths(mode, track, derive_seed(seed, "widths"))
    centers, src = centers_from_path(track, widths, dedup_radius, return_source=True)
    state = init_noisy_map(centers, points_per_group, derive_seed(seed, "init"), T=schedule.T,
                           headings=horizontal_headings(track)[src])
    final = denoise_chain(state, denoiser, schedule, derive_seed(seed, "chain"))
    return Generated(final.points, state.points, centers, widths)


@dataclass
class DenoisedShape:
    noisy: np.ndarray
    clean: np.ndarray
    denoised: np.ndarray


def denoise_shape(spec: ShapeSpec, denoiser: Denoiser, schedule: NoiseSchedule, seed: int,
                  t_start=None) -> DenoisedShape:
    """Treat a noisy synthetic shape as the state at ``t_start`` (default T) and denoise it.

    Every lattice point anchors the single noisy point drawn around it.
    """
    noisy, clean, centers = synth_shape(spec, derive_seed(seed, "shape"))
    t0 = schedule.check_t(t_start or schedule.T)
    state = NoisyMapState(t0, noisy, np.arange(noisy.shape[0]), centers)
    final = denoise_chain(state, denoiser, schedule, derive_seed(seed, "chain"))
    return DenoisedShape(noisy, clean, final.points)


def radial_spread(points, center=(0.0, 0.0)) -> float:
    """Standard deviation of the horizontal distance to ``center``."""
    p = np.asarray(points, dtype=np.float64)
    return float(np.linalg.norm(p[:, :2] - np.asarray(center), axis=1).std())
