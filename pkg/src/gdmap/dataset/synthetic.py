"""Synthetic maps: lattice-filled outlines and walled corridor scenes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

SHAPE_KINDS = ("line", "curve", "ring", "square")


@dataclass(frozen=True)
class ShapeSpec:
    kind: str
    length: float = 200.0
    width: float = 20.0
    diameter: float = 120.0
    band: float = 0.0  # ring thickness; 0 draws a single circle
    side: float = 200.0
    spacing: float = 1.0
    noise: float = 1.0
    amplitude: float = 30.0
    wavelength: float = 100.0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise InvalidArgument(
                f"unknown shape kind {self.kind!r}; valid kinds: {', '.join(SHAPE_KINDS)}"
            )
        for name in ("length", "width", "diameter", "side", "spacing", "wavelength"):
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"{name} must be > 0")
        if self.noise < 0 or self.band < 0 or self.amplitude < 0:
            raise InvalidArgument("noise, band and amplitude must be >= 0")


def _axis(extent, spacing):
    n = int(np.floor(extent / spacing + 1e-9))
    return (np.arange(n + 1) * spacing) - extent / 2


def shape_outline(spec: ShapeSpec) -> np.ndarray:
    """Clean lattice fill of the shape at ``spec.spacing``, z = 0."""
    if spec.kind in ("line", "curve"):
        x, y = np.meshgrid(_axis(spec.length, spec.spacing), _axis(spec.width, spec.spacing), indexing="ij")
        x, y = x.ravel(), y.ravel()
        if spec.kind == "curve":
            y = y + spec.amplitude * np.sin(2 * np.pi * x / spec.wavelength)
    elif spec.kind == "square":
        x, y = np.meshgrid(_axis(spec.side, spec.spacing), _axis(spec.side, spec.spacing), indexing="ij")
        x, y = x.ravel(), y.ravel()
    else:
        r0 = spec.diameter / 2
        radii = r0 + _axis(spec.band, spec.spacing) if spec.band > 0 else np.array([r0])
        xs, ys = [], []
        for r in radii:
            n = max(3, int(round(2 * np.pi * r / spec.spacing)))
            a = 2 * np.pi * np.arange(n) / n
            xs.append(r * np.cos(a))
            ys.append(r * np.sin(a))
        x, y = np.concatenate(xs), np.concatenate(ys)
    return np.stack([x, y, np.zeros_like(x)], axis=1)


def synth_shape(spec: ShapeSpec, seed: int):
    """Return ``(noisy, clean, centers)``; the clean lattice doubles as centres."""
    clean = shape_outline(spec)
    noise = np.random.default_rng(seed).standard_normal(clean.shape) * spec.noise
    return clean + noise, clean, clean.copy()


@dataclass
class CorridorScene:
    """A straight or gently curved street: flat ground between two walls."""

    truth: np.ndarray
    path: np.ndarray
    half_width: float
    wall_height: float
    structure: np.ndarray  # wall points only


def _arc(origin, heading, curvature, s):
    """Planar constant-curvature curve; returns positions and left normals at arc length ``s``."""
    s = np.asarray(s, dtype=np.float64)
    if abs(curvature) < 1e-12:
        th = np.full_like(s, heading)
        x = origin[0] + s * np.cos(heading)
        y = origin[1] + s * np.sin(heading)
    else:
        th = heading + curvature * s
        x = origin[0] + (np.sin(th) - np.sin(heading)) / curvature
        y = origin[1] - (np.cos(th) - np.cos(heading)) / curvature
    pos = np.stack([x, y, np.full_like(x, origin[2])], axis=1)
    normal = np.stack([-np.sin(th), np.cos(th), np.zeros_like(th)], axis=1)
    return pos, normal


def corridor_scene(
    seed: int,
    n_points: int = 2000,
    length=(20.0, 30.0),
    half_width=(4.0, 8.0),
    wall_height=(3.0, 6.0),
    max_curvature: float = 1.0 / 1000.0,
    extent: float = 200.0,
) -> CorridorScene:
    """Sample a corridor scene; truth points are split between ground and walls by area."""
    rng = np.random.default_rng(seed)
    L = rng.uniform(*length)
    W = rng.uniform(*half_width)
    H = rng.uniform(*wall_height)
    kappa = rng.uniform(-max_curvature, max_curvature)
    origin = np.array([*rng.uniform(-extent, extent, 2), rng.uniform(-5.0, 5.0)])
    heading = rng.uniform(0, 2 * np.pi)

    n_path = max(2, int(np.floor(L)) + 1)
    path, _ = _arc(origin, heading, kappa, np.linspace(0.0, L, n_path))

    ground_area = 2 * W * L
    wall_area = 2 * H * L
    n_wall = int(round(n_points * wall_area / (ground_area + wall_area)))
    n_ground = n_points - n_wall

    s = rng.uniform(0, L, n_ground)
    base, nrm = _arc(origin, heading, kappa, s)
    ground = base + rng.uniform(-W, W, n_ground)[:, None] * nrm

    s = rng.uniform(0, L, n_wall)
    base, nrm = _arc(origin, heading, kappa, s)
    side = np.where(rng.random(n_wall) < 0.5, -1.0, 1.0)
    walls = base + (side * W)[:, None] * nrm
    walls[:, 2] += rng.uniform(0, H, n_wall)

    truth = np.concatenate([ground, walls], axis=0)
    return CorridorScene(truth=truth, path=path, half_width=W, wall_height=H, structure=walls)
