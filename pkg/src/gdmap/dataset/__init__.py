"""Corpus construction and file formats."""

from .blocks import BlockMap, block_index, build_block_maps, sample_sparse_hits
from .io import read_cloud, read_path, read_poses, read_scan, write_cloud, write_scan
from .synthetic import SHAPE_KINDS, CorridorScene, ShapeSpec, corridor_scene, shape_outline, synth_shape

__all__ = [
    "BlockMap", "block_index", "build_block_maps", "sample_sparse_hits",
    "read_cloud", "read_path", "read_poses", "read_scan", "write_cloud", "write_scan",
    "SHAPE_KINDS", "CorridorScene", "ShapeSpec", "corridor_scene", "shape_outline", "synth_shape",
]
