"""Accumulate posed scans into fixed-length block maps."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import InvalidArgument, MissingScan
from ..geometry import as_cloud, farthest_point_sample
from ..stage1 import arc_length
from .io import read_poses, read_scan

log = logging.getLogger(__name__)

DEFAULT_BLOCK_LENGTH = 150.0
DEFAULT_TARGET_POINTS = 50_000
SCAN_SUFFIXES = (".bin", ".xyz", ".txt", ".ply")


@dataclass
class BlockMap:
    cloud: np.ndarray
    path: np.ndarray
    index: int
    extent: tuple  # (start, end) arc length in metres
    raw_count: int


def block_index(s, block_length: float) -> np.ndarray:
    """Block of each arc-length value; a point exactly on a boundary goes to the lower block."""
    s = np.asarray(s, dtype=np.float64)
    return np.maximum(np.ceil(s / block_length) - 1, 0).astype(np.int64)


def find_scan(scans_dir, i: int):
    for suffix in SCAN_SUFFIXES:
        p = Path(scans_dir) / f"{i:06d}{suffix}"
        if p.exists():
            return p
    return None


def build_block_maps(
    poses_file,
    scans_dir,
    block_length: float = DEFAULT_BLOCK_LENGTH,
    target_points: int = DEFAULT_TARGET_POINTS,
    skip_missing: bool = False,
    fps_start: int = 0,
) -> list:
    """Transform every scan into the world frame and cut the result into blocks.

    Scan ``i`` is ``scans_dir/{i:06d}.bin`` (or .xyz/.txt/.ply) and belongs to
    the block of its pose's travelled distance.
    """
    if block_length <= 0 or target_points < 1:
        raise InvalidArgument("block_length and target_points must be positive")
    scans_dir = Path(scans_dir)
    if not scans_dir.is_dir():
        raise MissingScan(f"scan directory {scans_dir} does not exist")
    poses = read_poses(poses_file)
    if poses.shape[0] < 2:
        raise InvalidArgument("need at least two poses")
    positions = poses[:, :, 3]
    s = arc_length(positions)
    blk = block_index(s, block_length)

    per_block: dict = {}
    for i, pose in enumerate(poses):
        scan_path = find_scan(scans_dir, i)
        if scan_path is None:
            if skip_missing:
                log.warning("no scan for pose %d in %s; skipping", i, scans_dir)
                continue
            raise MissingScan(f"no scan for pose {i} in {scans_dir}")
        local = read_scan(scan_path)
        world = local @ pose[:, :3].T + pose[:, 3]
        per_block.setdefault(int(blk[i]), []).append(world)

    blocks = []
    for b in sorted(per_block):
        raw = as_cloud(np.concatenate(per_block[b], axis=0))
        if raw.shape[0] == 0:
            continue
        k = min(target_points, raw.shape[0])
        cloud = raw if k == raw.shape[0] else raw[farthest_point_sample(raw, k, fps_start)]
        in_block = blk == b
        blocks.append(
            BlockMap(
                cloud=cloud,
                path=positions[in_block],
                index=b,
                extent=(float(b * block_length), float(min((b + 1) * block_length, s[-1]))),
                raw_count=int(raw.shape[0]),
            )
        )
    return blocks


def sample_sparse_hits(cloud, k: int, seed: int) -> np.ndarray:
    """``k`` points drawn uniformly without replacement, returned in index order."""
    pts = as_cloud(cloud)
    if not 0 <= k <= pts.shape[0]:
        raise InvalidArgument(f"cannot draw {k} hits from {pts.shape[0]} points")
    idx = np.sort(np.random.default_rng(seed).choice(pts.shape[0], size=k, replace=False))
    return pts[idx]
