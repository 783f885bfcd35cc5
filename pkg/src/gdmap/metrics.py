"""Map-quality metrics: Chamfer distance, voxel IoU, per-point error field."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyInput, InvalidArgument
from .geometry import SpatialIndex, as_cloud, voxel_cells

DEFAULT_RESOLUTIONS = (6.0, 4.0, 2.0)

REPORT_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "title": "gdmap evaluation report",
    "type": "object",
    "required": ["chamfer_m", "iou_pct", "runtime_s", "n_generated", "n_truth"],
    "properties": {
        "chamfer_m": {"type": "number", "minimum": 0},
        "iou_pct": {
            "type": "object",
            "patternProperties": {
                "^[0-9]+(\\.[0-9]+)?$": {"type": "number", "minimum": 0, "maximum": 100}
            },
            "additionalProperties": False,
            "minProperties": 1,
        },
        "runtime_s": {"type": "number", "minimum": 0},
        "n_generated": {"type": "integer", "minimum": 1},
        "n_truth": {"type": "integer", "minimum": 1},
        "blocks": {"type": "integer", "minimum": 1},
    },
    "additionalProperties": False,
}


def _nonempty(cloud, name):
    pts = as_cloud(cloud)
    if pts.shape[0] == 0:
        raise EmptyInput(f"{name} cloud is empty")
    return pts


def nearest_distances(src, dst) -> np.ndarray:
    """Distance from every point of ``src`` to its nearest point in ``dst``."""
    return SpatialIndex(_nonempty(dst, "target")).nearest(_nonempty(src, "source"))[1]


def chamfer(a, b) -> float:
    """Symmetric Chamfer distance: average of the two mean nearest distances (metres)."""
    a = _nonempty(a, "first")
    b = _nonempty(b, "second")
    return 0.5 * (float(nearest_distances(a, b).mean()) + float(nearest_distances(b, a).mean()))


def iou(a, b, resolution: float) -> float:
    """Occupancy-voxel Jaccard index in percent."""
    va = voxel_cells(_nonempty(a, "first"), resolution)
    vb = voxel_cells(_nonempty(b, "second"), resolution)
    both = np.concatenate([va, vb], axis=0)
    union = np.unique(both, axis=0).shape[0]
    inter = va.shape[0] + vb.shape[0] - union
    return 100.0 * inter / union


def error_field(generated, truth) -> np.ndarray:
    return nearest_distances(generated, truth)


@dataclass
class EvalReport:
    chamfer_m: float
    iou_pct: dict
    runtime_s: float
    n_generated: int
    n_truth: int
    blocks: int = field(default=1)

    def to_dict(self) -> dict:
        return {
            "chamfer_m": self.chamfer_m,
            "iou_pct": {_res_key(r): v for r, v in self.iou_pct.items()},
            "runtime_s": self.runtime_s,
            "n_generated": self.n_generated,
            "n_truth": self.n_truth,
            "blocks": self.blocks,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        lines = [
            f"chamfer_m = {self.chamfer_m:.6f}",
            *(f"iou_pct@{_res_key(r)}m = {v:.4f}" for r, v in self.iou_pct.items()),
            f"runtime_s = {self.runtime_s:.3f}",
            f"n_generated = {self.n_generated}",
            f"n_truth = {self.n_truth}",
            f"blocks = {self.blocks}",
        ]
        return "\n".join(lines) + "\n"


def _res_key(r) -> str:
    r = float(r)
    return str(int(r)) if r.is_integer() else repr(r)


def evaluate(generated, truth, resolutions=DEFAULT_RESOLUTIONS) -> EvalReport:
    start = time.perf_counter()
    g = _nonempty(generated, "generated")
    t = _nonempty(truth, "truth")
    if len(resolutions) == 0:
        raise InvalidArgument("at least one IoU resolution is required")
    cd = chamfer(g, t)
    ious = {float(r): iou(g, t, r) for r in resolutions}
    return EvalReport(cd, ious, time.perf_counter() - start, g.shape[0], t.shape[0])


def evaluate_blockwise(generated, truth, path, block_length: float = 150.0,
                       resolutions=DEFAULT_RESOLUTIONS) -> EvalReport:
    """Split both clouds by the arc length of their nearest path point and average.

    Blocks where either cloud is empty are skipped.
    """
    from .stage1 import arc_length

    start = time.perf_counter()
    g = _nonempty(generated, "generated")
    t = _nonempty(truth, "truth")
    p = as_cloud(path, allow_empty=False)
    s = arc_length(p)
    index = SpatialIndex(p)

    def block_of(pts):
        return np.maximum(np.ceil(s[index.nearest(pts)[0]] / block_length) - 1, 0).astype(int)

    bg, bt = block_of(g), block_of(t)
    reports = [
        evaluate(g[bg == b], t[bt == b], resolutions)
        for b in np.intersect1d(bg, bt)
    ]
    if not reports:
        raise EmptyInput("no block holds points from both clouds")
    return EvalReport(
        chamfer_m=float(np.mean([r.chamfer_m for r in reports])),
        iou_pct={float(r): float(np.mean([x.iou_pct[float(r)] for x in reports])) for r in resolutions},
        runtime_s=time.perf_counter() - start,
        n_generated=g.shape[0],
        n_truth=t.shape[0],
        blocks=len(reports),
    )
