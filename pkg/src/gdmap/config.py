"""Run configuration: defaults, JSON config files and command-line overrides.

Precedence is flags > config file > defaults. Unknown keys are rejected at
every level so a typo never silently falls back to a default.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .errors import InvalidArgument


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02


@dataclass
class ModelConfig:
    hidden: list = field(default_factory=lambda: [128, 128])
    activation: str = "silu"
    time_dim: int = 16
    point_k: int = 0
    center_k: int = 8
    center_scale: float = 0.01


@dataclass
class TrainSection:
    epochs: int = 200
    steps: Optional[int] = None  # overrides epochs when set
    lr: float = 1e-3
    lr_min: Optional[float] = 1e-5
    r: float = 5.0
    width: float = 20.0  # grouping width for entries without their own
    log_every: int = 0


@dataclass
class Stage1Config:
    mode: int = 1
    width: float = 20.0
    width_range: list = field(default_factory=lambda: [15.0, 35.0])
    width_cap: float = 50.0
    points_per_group: Optional[int] = None  # None: take it from the checkpoint
    dedup_radius: float = 0.5


@dataclass
class ShapeConfig:
    kind: str = "ring"
    length: float = 200.0
    width: float = 20.0
    diameter: float = 120.0
    band: float = 0.0
    side: float = 200.0
    spacing: float = 1.0
    noise: float = 1.0
    t_start: Optional[int] = None  # None: start from T


@dataclass
class EvalConfig:
    resolutions: list = field(default_factory=lambda: [6.0, 4.0, 2.0])
    block_length: Optional[float] = None  # set to evaluate block by block along a path


@dataclass
class DatasetConfig:
    block_length: float = 150.0
    target_points: int = 50_000
    skip_missing: bool = False
    fps_start: int = 0
    corridors: int = 0
    corridor_points: int = 2000
    sparse_hits: int = 50


@dataclass
class PathsConfig:
    poses: Optional[str] = None
    scans: Optional[str] = None
    dataset: Optional[str] = None
    checkpoint: Optional[str] = None
    path: Optional[str] = None
    hits: Optional[str] = None
    truth: Optional[str] = None
    generated: Optional[str] = None
    out: str = "out"


@dataclass
class RunConfig:
    seed: int = 0
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainSection = field(default_factory=TrainSection)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    shape: ShapeConfig = field(default_factory=ShapeConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, directory) -> Path:
        out = Path(directory) / "config.json"
        out.write_text(self.to_json())
        return out


def _merge(obj, data: dict, where: str):
    if not isinstance(data, dict):
        raise InvalidArgument(f"{where or 'config'} must be a JSON object")
    names = {f.name: f for f in dataclasses.fields(obj)}
    for key, value in data.items():
        if key not in names:
            valid = ", ".join(sorted(names))
            raise InvalidArgument(f"unknown config key {where + key!r}; valid keys: {valid}")
        current = getattr(obj, key)
        if dataclasses.is_dataclass(current):
            _merge(current, value, f"{where}{key}.")
        else:
            setattr(obj, key, value)


def from_dict(data: dict) -> RunConfig:
    cfg = RunConfig()
    _merge(cfg, data, "")
    return cfg


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise InvalidArgument(f"{path}: invalid JSON ({exc})") from None
    return from_dict(data)


def apply_overrides(cfg: RunConfig, overrides: dict) -> RunConfig:
    """Set dotted keys (``"stage1.width"``) whose value is not None."""
    for dotted, value in overrides.items():
        if value is None:
            continue
        *parents, leaf = dotted.split(".")
        obj: Any = cfg
        for p in parents:
            obj = getattr(obj, p)
        if not hasattr(obj, leaf):
            raise InvalidArgument(f"unknown config key {dotted!r}")
        setattr(obj, leaf, value)
    return cfg


def resolve(config_path=None, overrides: Optional[dict] = None) -> RunConfig:
    cfg = load_config(config_path) if config_path else RunConfig()
    return apply_overrides(cfg, overrides or {})
