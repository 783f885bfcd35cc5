"""DDPM noise schedule plus per-group forward and reverse diffusion.

Timesteps are 1-based throughout: ``t`` in ``[1, T]`` and the schedule arrays
hold step ``t`` at position ``t - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateSchedule, EmptyInput, InvalidArgument
from .geometry import as_cloud
from .grouping import GroupedMap, check_headings

DEFAULT_T = 1000
DEFAULT_BETA_START = 1e-4
DEFAULT_BETA_END = 0.02


@dataclass(frozen=True)
class NoiseSchedule:
    beta: np.ndarray
    alpha: np.ndarray = field(init=False)
    alpha_bar: np.ndarray = field(init=False)

    def __post_init__(self):
        beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        if beta.size == 0:
            raise InvalidArgument("schedule needs at least one step")
        alpha = 1.0 - beta
        for name, arr in (("beta", beta), ("alpha", alpha), ("alpha_bar", np.cumprod(alpha))):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def T(self) -> int:
        return self.beta.shape[0]

    def check_t(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise InvalidArgument(f"timestep {t} outside [1, {self.T}]")
        return t

    def __eq__(self, other):
        return isinstance(other, NoiseSchedule) and np.array_equal(self.beta, other.beta)

    def __hash__(self):
        return hash(self.beta.tobytes())


def build_schedule(
    T: int = DEFAULT_T,
    beta_start: float = DEFAULT_BETA_START,
    beta_end: float = DEFAULT_BETA_END,
) -> NoiseSchedule:
    """Linear beta schedule over ``T`` steps."""
    if int(T) != T or T < 1:
        raise InvalidArgument(f"T must be a positive integer, got {T}")
    if not 0 < beta_start <= beta_end < 1:
        raise InvalidArgument(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    return NoiseSchedule(np.linspace(beta_start, beta_end, int(T)))


def forward_diffuse_group(g0, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    """Noise a centred group straight to step ``t`` in closed form."""
    g0 = np.asarray(g0, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if g0.shape != eps.shape:
        raise InvalidArgument(f"noise shape {eps.shape} != points shape {g0.shape}")
    ab = schedule.alpha_bar[schedule.check_t(t) - 1]
    return np.sqrt(ab) * g0 + np.sqrt(1.0 - ab) * eps


def predict_x0(gt, t: int, eps, schedule: NoiseSchedule) -> np.ndarray:
    gt = np.asarray(gt, dtype=np.float64)
    eps = np.asarray(eps, dtype=np.float64)
    if gt.shape != eps.shape:
        raise InvalidArgument(f"noise shape {eps.shape} != points shape {gt.shape}")
    ab = schedule.alpha_bar[schedule.check_t(t) - 1]
    if ab <= 0.0:
        raise DegenerateSchedule(f"alpha_bar at t={t} is zero; x0 is unrecoverable")
    return (gt - np.sqrt(1.0 - ab) * eps) / np.sqrt(ab)


def reverse_step(gt, t: int, eps_pred, z, schedule: NoiseSchedule) -> np.ndarray:
    """One ancestral denoising step from ``t`` to ``t - 1``.

    ``z`` may be None for a deterministic step and must be zero at ``t == 1``.
    """
    gt = np.asarray(gt, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    t = schedule.check_t(t)
    if eps_pred.shape != gt.shape:
        raise InvalidArgument(f"predicted noise shape {eps_pred.shape} != {gt.shape}")
    if z is None:
        z = np.zeros_like(gt)
    z = np.asarray(z, dtype=np.float64)
    if z.shape != gt.shape:
        raise InvalidArgument(f"z shape {z.shape} != {gt.shape}")
    if t == 1 and np.any(z != 0):
        raise InvalidArgument("z must be zero on the final step (t=1)")
    beta = schedule.beta[t - 1]
    alpha = schedule.alpha[t - 1]
    ab = schedule.alpha_bar[t - 1]
    if ab >= 1.0:
        coef = 0.0  # beta == 0: no noise was added at this step
    else:
        coef = beta / np.sqrt(1.0 - ab)
    return (gt - coef * eps_pred) / np.sqrt(alpha) + np.sqrt(beta) * z


@dataclass(frozen=True)
class NoisyMapState:
    """A whole noisy map at step ``t``.

    ``points`` are world-frame and group-major; ``labels`` give the owning
    group per point. ``eps`` is the forward noise when it is known and
    ``headings`` the optional per-centre path direction.
    """

    t: int
    points: np.ndarray
    labels: np.ndarray
    centers: np.ndarray
    eps: Optional[np.ndarray] = None
    seed: Optional[int] = None
    headings: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = as_cloud(self.points)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        centers = as_cloud(self.centers)
        if labels.shape[0] != pts.shape[0]:
            raise InvalidArgument("one label per point is required")
        if labels.size and (labels.min() < 0 or labels.max() >= centers.shape[0]):
            raise InvalidArgument("label refers to a non-existent centre")
        if self.t < 0:
            raise InvalidArgument(f"negative timestep {self.t}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "headings", check_headings(self.headings, centers.shape[0]))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def anchors(self) -> np.ndarray:
        """Centre of the owning group for every point."""
        return self.centers[self.labels]

    @property
    def offsets(self) -> np.ndarray:
        """Group-frame coordinates g_t."""
        return self.points - self.anchors

    def with_offsets(self, offsets, t: int) -> "NoisyMapState":
        return replace(self, t=t, points=self.anchors + offsets, eps=None)


def forward_diffuse_map(
    grouped: GroupedMap, t: int, rng_seed: int, schedule: NoiseSchedule
) -> NoisyMapState:
    """Diffuse every group of ``grouped`` to step ``t`` in its own frame.

    Output is group-major; the sampled noise is kept on the state.
    """
    t = schedule.check_t(t)
    order = grouped.order
    labels = grouped.labels[order]
    g0 = grouped.parent[order] - grouped.centers[labels]
    eps = np.random.default_rng(rng_seed).standard_normal(g0.shape)
    gt = forward_diffuse_group(g0, t, eps, schedule)
    return NoisyMapState(
        t=t,
        points=grouped.centers[labels] + gt,
        labels=labels,
        centers=grouped.centers,
        eps=eps,
        seed=rng_seed,
        headings=grouped.headings,
    )


def init_noisy_map(
    centers, points_per_group: int, rng_seed: int, T: int = DEFAULT_T, headings=None
) -> NoisyMapState:
    """P_T = C + eps, with ``points_per_group`` standard-normal draws per centre."""
    ctr = as_cloud(centers)
    if ctr.shape[0] == 0:
        raise EmptyInput("no centres to initialise from")
    if points_per_group < 1:
        raise InvalidArgument(f"points_per_group must be >= 1, got {points_per_group}")
    labels = np.repeat(np.arange(ctr.shape[0]), int(points_per_group))
    eps = np.random.default_rng(rng_seed).standard_normal((labels.shape[0], 3))
    return NoisyMapState(
        t=int(T), points=ctr[labels] + eps, labels=labels, centers=ctr, eps=eps, seed=rng_seed,
        headings=headings,
    )


Denoiser = Callable[[NoisyMapState], np.ndarray]


def denoise_chain(
    state: NoisyMapState,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    rng_seed: int,
    callback: Optional[Callable[[NoisyMapState], None]] = None,
) -> NoisyMapState:
    """Run reverse steps from ``state.t`` down to 0.

    The denoiser sees the whole map once per step; ``z`` is zero on the last step.
    """
    schedule.check_t(state.t)
    rng = np.random.default_rng(rng_seed)
    g = state.offsets
    for t in range(state.t, 0, -1):
        eps_pred = np.asarray(denoiser(state), dtype=np.float64)
        z = rng.standard_normal(g.shape) if t > 1 else None
        g = reverse_step(g, t, eps_pred, z, schedule)
        state = state.with_offsets(g, t - 1)
        if callback is not None:
            callback(state)
    return state


def sample_map(
    centers,
    points_per_group: int,
    denoiser: Denoiser,
    schedule: NoiseSchedule,
    rng_seed: int,
    headings=None,
) -> np.ndarray:
    """Generate a map: initialise P_T around ``centers`` and denoise to P_0."""
    init_seed, chain_seed = np.random.SeedSequence(rng_seed).generate_state(2)
    state = init_noisy_map(centers, points_per_group, int(init_seed), T=schedule.T, headings=headings)
    return denoise_chain(state, denoiser, schedule, int(chain_seed)).points
