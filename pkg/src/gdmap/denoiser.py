"""Per-point noise-prediction network with hand-written backprop.

Each point is described by its group-frame coordinates, its group centre,
a sinusoidal embedding of the timestep, the mean offset to its nearest
noisy neighbours and the mean offset from its centre to the nearest other
centres (also split along and across the path when headings are known).
A small MLP maps that feature vector to a 3D noise estimate.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import expit

from .diffusion import NoiseSchedule, NoisyMapState, forward_diffuse_map
from .errors import (
    EmptyInput,
    IncompatibleCheckpoint,
    InvalidArgument,
    NumericalError,
    ParseError,
    TrainingDiverged,
)
from .grouping import GroupedMap

ACTIVATIONS = ("silu", "tanh")


@dataclass(frozen=True)
class Architecture:
    hidden: tuple = (128, 128)
    activation: str = "silu"
    time_dim: int = 16
    point_k: int = 0  # noisy-point neighbours; 0 zeroes that feature
    center_k: int = 8
    center_scale: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.activation not in ACTIVATIONS:
            raise InvalidArgument(f"activation must be one of {ACTIVATIONS}")
        if self.time_dim < 0 or self.time_dim % 2:
            raise InvalidArgument("time_dim must be a non-negative even number")
        if any(h < 1 for h in self.hidden):
            raise InvalidArgument("hidden widths must be positive")
        if self.point_k < 0 or self.center_k < 0:
            raise InvalidArgument("neighbour counts must be >= 0")

    @property
    def in_dim(self) -> int:
        return 14 + self.time_dim

    @property
    def layer_shapes(self) -> list:
        dims = [self.in_dim, *self.hidden, 3]
        return [(dims[i], dims[i + 1]) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(a * b + b for a, b in self.layer_shapes)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Architecture":
        return cls(**d)


@dataclass
class DenoiserParams:
    """All weights and biases as one flat float64 vector plus layer views."""

    arch: Architecture
    flat: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.flat = np.asarray(self.flat, dtype=np.float64).reshape(-1)
        if self.flat.shape[0] != self.arch.n_params:
            raise InvalidArgument(
                f"expected {self.arch.n_params} parameters, got {self.flat.shape[0]}"
            )

    @classmethod
    def zeros(cls, arch: Architecture) -> "DenoiserParams":
        return cls(arch, np.zeros(arch.n_params))

    @classmethod
    def init(cls, arch: Architecture, seed: int) -> "DenoiserParams":
        rng = np.random.default_rng(seed)
        p = cls.zeros(arch)
        layers = p.layers()
        for i, (W, _) in enumerate(layers):
            W[...] = rng.standard_normal(W.shape) / np.sqrt(W.shape[0])
            if i == len(layers) - 1:
                W *= 0.1
        return p

    def layers(self) -> list:
        """``[(W, b), ...]`` as writable views into ``flat``; W is (in, out)."""
        out, pos = [], 0
        for a, b in self.arch.layer_shapes:
            W = self.flat[pos : pos + a * b].reshape(a, b)
            pos += a * b
            out.append((W, self.flat[pos : pos + b]))
            pos += b
        return out

    def copy(self) -> "DenoiserParams":
        return DenoiserParams(self.arch, self.flat.copy())


def time_embedding(t, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Sinusoidal embedding ``[sin(t f_k), cos(t f_k)]`` with geometric frequencies."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if dim == 0:
        return np.zeros((t.shape[0], 0))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half) / half)
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _neighbour_mean_offset(points: np.ndarray, k: int) -> np.ndarray:
    n = points.shape[0]
    k = min(k, n - 1)
    if k <= 0:
        return np.zeros_like(points)
    _, idx = cKDTree(points).query(points, k=k + 1)
    nb = idx[:, 1:]
    # a duplicate may sort ahead of the query point itself
    self_first = idx[:, 0] == np.arange(n)
    if not np.all(self_first):
        rows = np.flatnonzero(~self_first)
        for r in rows:
            cand = [j for j in idx[r] if j != r][:k]
            nb[r] = cand
    return points[nb].mean(axis=1) - points


def point_features(state: NoisyMapState, arch: Architecture) -> np.ndarray:
    """Feature matrix ``(n, arch.in_dim)`` for every point of ``state``."""
    if state.n == 0:
        raise EmptyInput("noisy map has no points")
    anchors = state.anchors
    g = state.points - anchors
    c_rel = (anchors - state.centers.mean(axis=0)) * arch.center_scale
    temb = np.broadcast_to(time_embedding(state.t, arch.time_dim), (state.n, arch.time_dim))
    pt_ctx = _neighbour_mean_offset(state.points, arch.point_k)
    ctr = _neighbour_mean_offset(state.centers, arch.center_k)
    # split the centre context into along-track and across-track parts so a
    # corridor edge and the end of the path stop looking alike
    if state.headings is not None:
        h = state.headings
        lateral = np.stack([-h[:, 1], h[:, 0], np.zeros(h.shape[0])], axis=1)
        split = np.abs(np.stack([(ctr * h).sum(1), (ctr * lateral).sum(1)], axis=1))
    else:
        split = np.zeros((state.centers.shape[0], 2))
    ctr_ctx = np.concatenate([ctr, split], axis=1)[state.labels]
    return np.concatenate([g, c_rel, temb, pt_ctx, ctr_ctx], axis=1)


def _act(x, kind):
    if kind == "tanh":
        return np.tanh(x)
    return x * expit(x)


def _act_grad(x, kind):
    if kind == "tanh":
        return 1.0 - np.tanh(x) ** 2
    s = expit(x)
    return s * (1.0 + x * (1.0 - s))


def forward(params: DenoiserParams, X: np.ndarray):
    """MLP forward pass. Returns ``(output, cache)``; cache feeds ``backward``."""
    if X.ndim != 2 or X.shape[1] != params.arch.in_dim:
        raise InvalidArgument(
            f"features have shape {X.shape}, network expects (n, {params.arch.in_dim})"
        )
    kind = params.arch.activation
    layers = params.layers()
    acts, pre = [X], []
    h = X
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        if i < len(layers) - 1:
            pre.append(z)
            h = _act(z, kind)
            acts.append(h)
        else:
            h = z
    return h, (acts, pre)


def backward(params: DenoiserParams, cache, d_out: np.ndarray) -> np.ndarray:
    """Gradient of a scalar w.r.t. the flat parameters given dScalar/dOutput."""
    acts, pre = cache
    kind = params.arch.activation
    grad = DenoiserParams.zeros(params.arch)
    glayers = grad.layers()
    layers = params.layers()
    delta = d_out
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = glayers[i]
        gW[...] = acts[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i > 0:
            delta = (delta @ layers[i][0].T) * _act_grad(pre[i - 1], kind)
    return grad.flat


def predict_noise(params: DenoiserParams, state: NoisyMapState) -> np.ndarray:
    out, _ = forward(params, point_features(state, params.arch))
    return out


class MLPDenoiser:
    """Callable adapter so a parameter set can drive ``denoise_chain``."""

    def __init__(self, params: DenoiserParams):
        self.params = params

    def __call__(self, state: NoisyMapState) -> np.ndarray:
        return predict_noise(self.params, state)


@dataclass(frozen=True)
class LossReport:
    l_mse: float
    l_mean: float
    l_std: float
    r: float

    @property
    def total(self) -> float:
        return self.l_mse + self.r * (self.l_mean + self.l_std)


def _loss_terms(eps_true, eps_pred, r):
    eps_true = np.asarray(eps_true, dtype=np.float64)
    eps_pred = np.asarray(eps_pred, dtype=np.float64)
    if eps_true.shape != eps_pred.shape:
        raise InvalidArgument(f"shape mismatch {eps_true.shape} vs {eps_pred.shape}")
    n = eps_pred.shape[0]
    if n == 0:
        raise EmptyInput("loss over zero points")
    diff = eps_pred - eps_true
    mu = eps_pred.mean()
    sigma = np.sqrt(((eps_pred - mu) ** 2).mean())
    report = LossReport(
        l_mse=float((diff**2).sum() / n),
        l_mean=float(mu**2),
        l_std=float((sigma - 1.0) ** 2),
        r=float(r),
    )
    return report, diff, mu, sigma


def loss(eps_true, eps_pred, r: float = 5.0) -> LossReport:
    """MSE over points plus ``r`` times the mean/std regulariser on the prediction.

    Mean and (population) standard deviation run over every scalar component.
    """
    return _loss_terms(eps_true, eps_pred, r)[0]


def loss_gradients(params: DenoiserParams, state: NoisyMapState, eps_true, r: float = 5.0):
    """Return ``(LossReport, grad)`` where ``grad`` is parameter-shaped."""
    X = point_features(state, params.arch)
    pred, cache = forward(params, X)
    report, diff, mu, sigma = _loss_terms(eps_true, pred, r)
    n = pred.shape[0]
    count = pred.size
    if not np.isfinite(report.total) or sigma == 0.0:
        raise NumericalError(f"non-finite loss or zero prediction spread (sigma={sigma})")
    d_pred = (2.0 / n) * diff
    d_pred = d_pred + r * (2.0 * mu / count)
    d_pred = d_pred + r * (2.0 * (sigma - 1.0) / (count * sigma)) * (pred - mu)
    grad = backward(params, cache, d_pred)
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient")
    return report, DenoiserParams(params.arch, grad)


@dataclass
class TrainConfig:
    epochs: int = 200
    steps: Optional[int] = None
    lr: float = 1e-3
    lr_min: Optional[float] = None  # cosine-anneal lr down to this over the run
    r: float = 5.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 0 or (self.steps is not None and self.steps < 0):
            raise InvalidArgument("epochs and steps must be non-negative")
        if self.lr < 0 or self.r < 0 or (self.lr_min is not None and self.lr_min < 0):
            raise InvalidArgument("lr, lr_min and r must be non-negative")

    def lr_at(self, step: int, total: int) -> float:
        if self.lr_min is None or total <= 1:
            return self.lr
        frac = step / (total - 1)
        return self.lr_min + 0.5 * (self.lr - self.lr_min) * (1.0 + np.cos(np.pi * frac))


@dataclass
class TrainResult:
    params: DenoiserParams
    losses: np.ndarray
    timesteps: np.ndarray


class Adam:
    def __init__(self, size: int, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.k = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> None:
        self.k += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        mhat = self.m / (1 - self.beta1**self.k)
        vhat = self.v / (1 - self.beta2**self.k)
        theta -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def train(
    dataset: Sequence[GroupedMap],
    config: TrainConfig,
    schedule: NoiseSchedule,
    seed: int,
    arch: Optional[Architecture] = None,
    init: Optional[DenoiserParams] = None,
    log_every: int = 0,
    logger=None,
) -> TrainResult:
    """Batch-size-1 training: one map, one random timestep per step."""
    if not dataset:
        raise EmptyInput("training set is empty")
    rng = np.random.default_rng(seed)
    if init is not None:
        params = init.copy()
    else:
        params = DenoiserParams.init(arch or Architecture(), int(rng.integers(2**63)))
    opt = Adam(params.flat.size, config.lr, config.beta1, config.beta2, config.adam_eps)
    total = config.steps if config.steps is not None else config.epochs * len(dataset)

    losses = np.empty(total)
    ts = np.empty(total, dtype=np.int64)
    order = np.empty(0, dtype=np.int64)
    for step in range(total):
        if step % len(dataset) == 0:
            order = rng.permutation(len(dataset))
        grouped = dataset[order[step % len(dataset)]]
        t = int(rng.integers(1, schedule.T + 1))
        state = forward_diffuse_map(grouped, t, int(rng.integers(2**63)), schedule)
        try:
            report, grad = loss_gradients(params, state, state.eps, config.r)
        except NumericalError:
            raise TrainingDiverged(step, float("nan")) from None
        if not np.isfinite(report.total):
            raise TrainingDiverged(step, report.total)
        losses[step] = report.total
        ts[step] = t
        opt.lr = config.lr_at(step, total)
        opt.step(params.flat, grad.flat)
        if logger is not None and log_every and (step + 1) % log_every == 0:
            window = losses[max(0, step + 1 - log_every) : step + 1]
            logger.info("step %d/%d loss %.4f", step + 1, total, window.mean())
    return TrainResult(params, losses, ts)


# -- checkpoint file -------------------------------------------------------

MAGIC = b"GDMC"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    params: DenoiserParams
    schedule: NoiseSchedule
    meta: dict = field(default_factory=dict)


def _block(payload: bytes) -> bytes:
    return struct.pack("<I", len(payload)) + payload


def save_params(path, params: DenoiserParams, schedule: NoiseSchedule, meta: Optional[dict] = None):
    """Write a little-endian checkpoint: magic, version, arch, schedule, meta, f64 payload."""
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    buf.write(_block(json.dumps(params.arch.to_dict(), sort_keys=True).encode()))
    buf.write(struct.pack("<I", schedule.T))
    buf.write(schedule.beta.astype("<f8").tobytes())
    buf.write(_block(json.dumps(meta or {}, sort_keys=True).encode()))
    buf.write(struct.pack("<Q", params.flat.size))
    buf.write(params.flat.astype("<f8").tobytes())
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path, schedule: Optional[NoiseSchedule] = None) -> Checkpoint:
    """Read a checkpoint; when ``schedule`` is given the stored one must match it."""
    data = Path(path).read_bytes()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise ParseError("truncated checkpoint", path, pos)
        chunk = data[pos : pos + n]
        pos += n
        return chunk

    if take(4) != MAGIC:
        raise ParseError("bad magic bytes, not a gdmap checkpoint", path, 0)
    (version,) = struct.unpack("<I", take(4))
    if version != FORMAT_VERSION:
        raise IncompatibleCheckpoint(f"checkpoint format v{version}, expected v{FORMAT_VERSION}")
    try:
        (alen,) = struct.unpack("<I", take(4))
        arch = Architecture.from_dict(json.loads(take(alen).decode()))
        (T,) = struct.unpack("<I", take(4))
        beta = np.frombuffer(take(8 * T), dtype="<f8").astype(np.float64)
        (mlen,) = struct.unpack("<I", take(4))
        meta = json.loads(take(mlen).decode())
        (count,) = struct.unpack("<Q", take(8))
        flat = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64)
    except (ValueError, TypeError, UnicodeDecodeError) as exc:
        raise ParseError(f"corrupt checkpoint: {exc}", path, pos) from exc
    if pos != len(data):
        raise ParseError("trailing bytes after parameter payload", path, pos)
    stored = NoiseSchedule(beta)
    if schedule is not None and stored != schedule:
        raise IncompatibleCheckpoint(
            f"checkpoint trained with T={stored.T}, pipeline configured with T={schedule.T}"
            if stored.T != schedule.T
            else "checkpoint beta schedule differs from the configured one"
        )
    try:
        params = DenoiserParams(arch, flat)
    except InvalidArgument as exc:
        raise ParseError(str(exc), path) from exc
    return Checkpoint(params, stored, meta)


def load_params(path, schedule: Optional[NoiseSchedule] = None) -> DenoiserParams:
    return load_checkpoint(path, schedule).params
