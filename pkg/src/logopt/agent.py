"""CNN trading agent: observation-driven portfolio and return prediction.

The network maps an observation tensor (d assets x n periods x 4 channels)
plus an advice portfolio to a predicted opening portfolio and a predicted
log return. All filters span the time axis only and all dense stages are
shared across assets, so the same parameters drive any asset count and the
outputs are equivariant under asset permutation. Forward, loss, and exact
reverse-mode gradients are implemented directly on numpy arrays; training
is momentum SGD over Poisson-recency experience replay.

Normalization layers use running statistics in every forward pass (so
forward is deterministic and the loss is an exact function of the
parameters); a training step additionally refreshes those statistics from
the batch it just saw.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .weights import validate_weights

NORM_EPS = 1e-5
NORM_DECAY = 0.9
REALIZED_RETURN_TOL = 1e-12

#: Table of (step threshold, learning rate): the first row whose threshold
#: exceeds the current step supplies the rate.
DEFAULT_LR_SCHEDULE = ((50_000, 1e-2), (100_000, 1e-3), (math.inf, 1e-4))


@dataclass(frozen=True)
class Architecture:
    """Layer plan; the parameter count is a pure function of these fields."""

    history: int = 10
    in_channels: int = 4
    conv_channels: tuple[int, ...] = (16, 16, 16)
    filter_width: int = 3
    fusion_units: int = 16

    def __post_init__(self):
        if self.out_length < 1:
            raise ValueError(
                f"history {self.history} too short for {len(self.conv_channels)} "
                f"width-{self.filter_width} conv layers"
            )

    @property
    def out_length(self) -> int:
        return self.history - len(self.conv_channels) * (self.filter_width - 1)

    @property
    def feature_length(self) -> int:
        return self.out_length * self.conv_channels[-1]

    def to_json(self) -> str:
        return json.dumps(
            {
                "history": self.history,
                "in_channels": self.in_channels,
                "conv_channels": list(self.conv_channels),
                "filter_width": self.filter_width,
                "fusion_units": self.fusion_units,
            },
            sort_keys=True,
        )

    @staticmethod
    def from_json(text: str) -> "Architecture":
        raw = json.loads(text)
        raw["conv_channels"] = tuple(raw["conv_channels"])
        return Architecture(**raw)


@dataclass
class AgentParameters:
    """Named trainable blocks plus normalization buffers for one architecture."""

    descriptor: Architecture
    blocks: dict[str, np.ndarray]
    buffers: dict[str, np.ndarray]

    def l2_norm(self) -> float:
        total = sum(float(np.sum(v * v)) for v in self.blocks.values())
        return math.sqrt(total)

    def zeros_like_blocks(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.blocks.items()}

    def copy(self) -> "AgentParameters":
        return AgentParameters(
            descriptor=self.descriptor,
            blocks={k: v.copy() for k, v in self.blocks.items()},
            buffers={k: v.copy() for k, v in self.buffers.items()},
        )


def _block_shapes(arch: Architecture) -> dict[str, tuple]:
    shapes: dict[str, tuple] = {}
    c_in = arch.in_channels
    for i, c_out in enumerate(arch.conv_channels):
        shapes[f"conv{i}_w"] = (arch.filter_width, c_in, c_out)
        shapes[f"conv{i}_b"] = (c_out,)
        shapes[f"norm{i}_gamma"] = (c_out,)
        shapes[f"norm{i}_beta"] = (c_out,)
        c_in = c_out
    f = arch.feature_length
    h = arch.fusion_units
    shapes["fusion_w"] = (f + 1, h)
    shapes["fusion_b"] = (h,)
    shapes["head_weight_w"] = (h,)
    shapes["head_weight_b"] = (1,)
    shapes["head_return_w"] = (h,)
    shapes["head_return_b"] = (1,)
    return shapes


def parameter_count(arch: Architecture) -> int:
    return sum(int(np.prod(s)) for s in _block_shapes(arch).values())


def init_agent(arch: Architecture, seed: int = 0) -> AgentParameters:
    """Rectifier-aware (He) initialization of all stages feeding a ReLU."""
    rng = np.random.default_rng(seed)
    blocks: dict[str, np.ndarray] = {}
    for name, shape in _block_shapes(arch).items():
        if name.endswith("_gamma"):
            blocks[name] = np.ones(shape)
        elif name.endswith(("_b", "_beta")):
            blocks[name] = np.zeros(shape)
        elif name.startswith("conv"):
            fan_in = shape[0] * shape[1]
            blocks[name] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        elif name == "fusion_w":
            blocks[name] = rng.normal(0.0, math.sqrt(2.0 / shape[0]), size=shape)
        else:
            blocks[name] = rng.normal(0.0, math.sqrt(1.0 / shape[0]), size=shape)
    buffers = {}
    for i, c_out in enumerate(arch.conv_channels):
        buffers[f"norm{i}_mean"] = np.zeros(c_out)
        buffers[f"norm{i}_var"] = np.ones(c_out)
    return AgentParameters(descriptor=arch, blocks=blocks, buffers=buffers)


def zero_agent(arch: Architecture) -> AgentParameters:
    params = init_agent(arch, seed=0)
    for k in params.blocks:
        params.blocks[k] = np.zeros_like(params.blocks[k])
    return params


@dataclass(frozen=True)
class Hyperparameters:
    """Loss coefficients, replay and optimizer settings."""

    alpha: float = 1e-4
    beta: float = 1e-2
    sigma: float = 1e-2
    weight_penalty: float = 1e-4
    poisson_lambda: float = 50.0
    momentum: float = 0.9
    lr_schedule: tuple[tuple[float, float], ...] = DEFAULT_LR_SCHEDULE
    batch_size: int = 32

    def __post_init__(self):
        if min(self.alpha, self.beta, self.sigma, self.weight_penalty) <= 0:
            raise ValueError("loss coefficients must be positive")
        if self.poisson_lambda <= 0:
            raise ValueError("replay parameter must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not self.lr_schedule or any(r <= 0 for _, r in self.lr_schedule):
            raise ValueError("learning-rate schedule must list positive rates")

    def learning_rate(self, step: int) -> float:
        for threshold, rate in self.lr_schedule:
            if step < threshold:
                return rate
        return self.lr_schedule[-1][1]


@dataclass(frozen=True)
class TradeRecord:
    """One realized trading period as seen (and acted on) by the agent."""

    period: int
    state: np.ndarray
    advice: np.ndarray
    action: np.ndarray
    predicted_return: float
    fluctuation: np.ndarray
    realized_return: float

    def __post_init__(self):
        if np.any(np.asarray(self.action) <= 0):
            raise ValueError("action entries must be strictly positive")
        expected = float(np.log(np.asarray(self.action) @ np.asarray(self.fluctuation)))
        if abs(expected - self.realized_return) > REALIZED_RETURN_TOL:
            raise ValueError(
                f"realized return {self.realized_return} inconsistent with "
                f"log(action @ fluctuation) = {expected}"
            )


def build_winner_target(x: np.ndarray) -> np.ndarray:
    """One-hot portfolio at the best-performing asset (ties: lowest index)."""
    x = np.asarray(x, dtype=np.float64)
    out = np.zeros(x.size)
    out[int(np.argmax(x))] = 1.0
    return out


def _check_inputs(params: AgentParameters, state: np.ndarray, advice: np.ndarray):
    arch = params.descriptor
    state = np.asarray(state, dtype=np.float64)
    advice = np.asarray(advice, dtype=np.float64)
    if state.ndim != 3 or state.shape[1] != arch.history or state.shape[2] != arch.in_channels:
        raise ValueError(
            f"state shape {state.shape} does not match (d, {arch.history}, {arch.in_channels})"
        )
    if advice.shape != (state.shape[0],):
        raise ValueError(f"advice shape {advice.shape} does not match {state.shape[0]} assets")
    return state, advice


def _forward_cached(params: AgentParameters, state: np.ndarray, advice: np.ndarray):
    arch = params.descriptor
    x = state
    conv_cache = []
    for i in range(len(arch.conv_channels)):
        w = params.blocks[f"conv{i}_w"]
        bias = params.blocks[f"conv{i}_b"]
        gamma = params.blocks[f"norm{i}_gamma"]
        beta = params.blocks[f"norm{i}_beta"]
        mean = params.buffers[f"norm{i}_mean"]
        var = params.buffers[f"norm{i}_var"]
        windows = np.lib.stride_tricks.sliding_window_view(x, arch.filter_width, axis=1)
        z = np.einsum("atcw,wco->ato", windows, w) + bias
        inv_std = 1.0 / np.sqrt(var + NORM_EPS)
        zhat = (z - mean) * inv_std
        pre_relu = gamma * zhat + beta
        out = np.maximum(pre_relu, 0.0)
        conv_cache.append((windows, z, zhat, inv_std, pre_relu))
        x = out
    d = state.shape[0]
    feats = x.reshape(d, -1)
    zin = np.concatenate([feats, advice[:, None]], axis=1)
    h_pre = zin @ params.blocks["fusion_w"] + params.blocks["fusion_b"]
    h = np.maximum(h_pre, 0.0)
    logits = h @ params.blocks["head_weight_w"] + params.blocks["head_weight_b"][0]
    shifted = logits - logits.max()
    expv = np.exp(shifted)
    b = expv / expv.sum()
    r_each = h @ params.blocks["head_return_w"] + params.blocks["head_return_b"][0]
    r = float(r_each.mean())
    cache = {
        "conv": conv_cache,
        "zin": zin,
        "h_pre": h_pre,
        "h": h,
        "b": b,
        "r_each": r_each,
    }
    return b, r, cache


def forward(
    params: AgentParameters, state: np.ndarray, advice: np.ndarray
) -> tuple[np.ndarray, float]:
    """Predicted (portfolio, log return) for one observation.

    The portfolio comes from a softmax over per-asset logits so its entries
    are strictly positive and sum to one; the return prediction averages a
    shared per-asset linear head, so it is invariant under asset permutation.
    """
    state, advice = _check_inputs(params, state, advice)
    b, r, _ = _forward_cached(params, state, advice)
    return b, r


def loss(params: AgentParameters, rec: TradeRecord, hp: Hyperparameters) -> float:
    """Squared return error + winner cross-entropy - reward + L2-norm penalty."""
    b, r, _ = _forward_cached(params, *_check_inputs(params, rec.state, rec.advice))
    target = build_winner_target(rec.fluctuation)
    return float(
        hp.alpha * (r - rec.realized_return) ** 2
        - hp.beta * (target @ np.log(b))
        - hp.sigma * rec.realized_return
        + hp.weight_penalty * params.l2_norm()
    )


def _backward_record(params: AgentParameters, rec: TradeRecord, hp: Hyperparameters):
    """Per-record loss and gradient of its data terms (no norm penalty)."""
    arch = params.descriptor
    state, advice = _check_inputs(params, rec.state, rec.advice)
    b, r, cache = _forward_cached(params, state, advice)
    target = build_winner_target(rec.fluctuation)
    data_loss = float(
        hp.alpha * (r - rec.realized_return) ** 2
        - hp.beta * (target @ np.log(b))
        - hp.sigma * rec.realized_return
    )
    grads = {k: np.zeros_like(v) for k, v in params.blocks.items()}
    d = state.shape[0]
    dlogits = hp.beta * (b - target)
    dr_each = np.full(d, 2.0 * hp.alpha * (r - rec.realized_return) / d)
    h = cache["h"]
    grads["head_weight_w"] = h.T @ dlogits
    grads["head_weight_b"] = np.array([dlogits.sum()])
    grads["head_return_w"] = h.T @ dr_each
    grads["head_return_b"] = np.array([dr_each.sum()])
    dh = (
        dlogits[:, None] * params.blocks["head_weight_w"][None, :]
        + dr_each[:, None] * params.blocks["head_return_w"][None, :]
    )
    dh_pre = dh * (cache["h_pre"] > 0)
    grads["fusion_w"] = cache["zin"].T @ dh_pre
    grads["fusion_b"] = dh_pre.sum(axis=0)
    dzin = dh_pre @ params.blocks["fusion_w"].T
    f = arch.feature_length
    dx = dzin[:, :f].reshape(d, arch.out_length, arch.conv_channels[-1])
    for i in reversed(range(len(arch.conv_channels))):
        windows, _, zhat, inv_std, pre_relu = cache["conv"][i]
        gamma = params.blocks[f"norm{i}_gamma"]
        dpre = dx * (pre_relu > 0)
        grads[f"norm{i}_gamma"] = np.einsum("ato,ato->o", dpre, zhat)
        grads[f"norm{i}_beta"] = dpre.sum(axis=(0, 1))
        dz = dpre * (gamma * inv_std)
        grads[f"conv{i}_b"] = dz.sum(axis=(0, 1))
        grads[f"conv{i}_w"] = np.einsum("atcw,ato->wco", windows, dz)
        if i > 0:
            w = params.blocks[f"conv{i}_w"]
            prev_len = windows.shape[1] + arch.filter_width - 1
            dprev = np.zeros((d, prev_len, w.shape[1]))
            for off in range(arch.filter_width):
                dprev[:, off : off + dz.shape[1], :] += dz @ w[off].T
            dx = dprev
    return data_loss, grads


def gradient(
    params: AgentParameters, batch: list[TradeRecord], hp: Hyperparameters
) -> dict[str, np.ndarray]:
    """Exact reverse-mode gradient of the mean batch loss for every block."""
    if not batch:
        raise ValueError("batch must be nonempty")
    total = {k: np.zeros_like(v) for k, v in params.blocks.items()}
    for rec in batch:
        _, g = _backward_record(params, rec, hp)
        for k in total:
            total[k] += g[k]
    scale = 1.0 / len(batch)
    for k in total:
        total[k] *= scale
    norm = params.l2_norm()
    if norm > 0:
        for k in total:
            total[k] += hp.weight_penalty * params.blocks[k] / norm
    return total


def batch_loss(params: AgentParameters, batch: list[TradeRecord], hp: Hyperparameters) -> float:
    data = sum(
        _backward_record(params, rec, hp)[0] for rec in batch
    ) / len(batch)
    return float(data + hp.weight_penalty * params.l2_norm())


def sample_replay(
    t: int,
    lam: float,
    batch: int,
    rng: np.random.Generator,
    earliest: int = 0,
) -> list[int]:
    """Recency-biased replay indices: ``t - xi ~ Poisson(lam)``, clamped.

    Draws outside the stored range [earliest, t] are clamped to its nearest
    end, so every returned index has a record.
    """
    if t < earliest:
        raise ValueError("empty replay history")
    if lam <= 0:
        raise ValueError("replay parameter must be positive")
    offsets = rng.poisson(lam, size=batch)
    return [int(x) for x in np.clip(t - offsets, earliest, t)]


def _refresh_norm_buffers(params: AgentParameters, batch: list[TradeRecord]):
    arch = params.descriptor
    sums = {}
    sqsums = {}
    counts = {}
    for rec in batch:
        state, advice = _check_inputs(params, rec.state, rec.advice)
        _, _, cache = _forward_cached(params, state, advice)
        for i in range(len(arch.conv_channels)):
            z = cache["conv"][i][1]
            sums[i] = sums.get(i, 0.0) + z.sum(axis=(0, 1))
            sqsums[i] = sqsums.get(i, 0.0) + (z * z).sum(axis=(0, 1))
            counts[i] = counts.get(i, 0) + z.shape[0] * z.shape[1]
    for i in range(len(arch.conv_channels)):
        mean = sums[i] / counts[i]
        var = np.maximum(sqsums[i] / counts[i] - mean * mean, 0.0)
        params.buffers[f"norm{i}_mean"] = (
            NORM_DECAY * params.buffers[f"norm{i}_mean"] + (1 - NORM_DECAY) * mean
        )
        params.buffers[f"norm{i}_var"] = (
            NORM_DECAY * params.buffers[f"norm{i}_var"] + (1 - NORM_DECAY) * var
        )


def train_step(
    params: AgentParameters,
    velocity: dict[str, np.ndarray],
    batch: list[TradeRecord],
    hp: Hyperparameters,
    step: int,
) -> tuple[AgentParameters, dict[str, np.ndarray]]:
    """One momentum-SGD update at the scheduled learning rate.

    Raises on a non-finite gradient (the caller should abort the run);
    refreshes normalization running statistics from the batch afterwards.
    """
    grads = gradient(params, batch, hp)
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient in block {k!r} at step {step}")
        velocity[k] = hp.momentum * velocity[k] + g
    lr = hp.learning_rate(step)
    for k in params.blocks:
        params.blocks[k] = params.blocks[k] - lr * velocity[k]
    _refresh_norm_buffers(params, batch)
    return params, velocity


class ReplayStore:
    """Period-indexed trade records; periods must be added contiguously."""

    def __init__(self):
        self._records: dict[int, TradeRecord] = {}
        self._earliest: int | None = None
        self._latest: int | None = None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def earliest(self) -> int:
        if self._earliest is None:
            raise ValueError("empty replay store")
        return self._earliest

    @property
    def latest(self) -> int:
        if self._latest is None:
            raise ValueError("empty replay store")
        return self._latest

    def add(self, rec: TradeRecord) -> None:
        if self._latest is not None and rec.period != self._latest + 1:
            raise ValueError(
                f"records must be contiguous: got period {rec.period} after {self._latest}"
            )
        if self._earliest is None:
            self._earliest = rec.period
        self._latest = rec.period
        self._records[rec.period] = rec

    def get(self, period: int) -> TradeRecord:
        return self._records[period]

    def sample_batch(self, hp: Hyperparameters, rng: np.random.Generator) -> list[TradeRecord]:
        periods = sample_replay(
            self.latest, hp.poisson_lambda, hp.batch_size, rng, earliest=self.earliest
        )
        return [self._records[p] for p in periods]


class OnlineTrader:
    """Stateful decide/observe/train loop around one parameter set."""

    def __init__(
        self,
        params: AgentParameters,
        hp: Hyperparameters,
        seed: int = 0,
        train: bool = True,
    ):
        self.params = params
        self.hp = hp
        self.train = train
        self.velocity = params.zeros_like_blocks()
        self.store = ReplayStore()
        self.rng = np.random.default_rng(seed)
        self.step = 0
        self.history: list[tuple[int, float, float]] = []  # (step, loss, lr)

    def decide(self, state: np.ndarray, advice: np.ndarray) -> tuple[np.ndarray, float]:
        b, r = forward(self.params, state, advice)
        return validate_weights(b, "agent decision"), r

    def observe(
        self,
        period: int,
        state: np.ndarray,
        advice: np.ndarray,
        action: np.ndarray,
        predicted_return: float,
        fluctuation: np.ndarray,
    ) -> None:
        rec = TradeRecord(
            period=period,
            state=state,
            advice=advice,
            action=action,
            predicted_return=predicted_return,
            fluctuation=fluctuation,
            realized_return=float(np.log(action @ fluctuation)),
        )
        self.store.add(rec)
        if self.train:
            self.train_once()

    def train_once(self) -> float:
        batch = self.store.sample_batch(self.hp, self.rng)
        lr = self.hp.learning_rate(self.step)
        value = batch_loss(self.params, batch, self.hp)
        train_step(self.params, self.velocity, batch, self.hp, self.step)
        self.history.append((self.step, value, lr))
        self.step += 1
        return value


def save_checkpoint(params: AgentParameters, path) -> None:
    """Self-describing container: architecture JSON + named flat arrays."""
    payload = {"architecture": np.frombuffer(params.descriptor.to_json().encode(), dtype=np.uint8)}
    for k, v in params.blocks.items():
        payload[f"param/{k}"] = v
    for k, v in params.buffers.items():
        payload[f"buffer/{k}"] = v
    np.savez(path, **payload)


def load_checkpoint(path, expected: Architecture | None = None) -> AgentParameters:
    """Load a checkpoint; rejects an architecture mismatch."""
    with np.load(path) as data:
        arch = Architecture.from_json(bytes(data["architecture"]).decode())
        if expected is not None and arch != expected:
            raise ValueError(f"checkpoint architecture {arch} does not match expected {expected}")
        blocks = {}
        buffers = {}
        for key in data.files:
            if key.startswith("param/"):
                blocks[key[len("param/"):]] = data[key]
            elif key.startswith("buffer/"):
                buffers[key[len("buffer/"):]] = data[key]
    want = set(_block_shapes(arch))
    if set(blocks) != want:
        raise ValueError(f"checkpoint blocks {sorted(blocks)} do not match architecture")
    return AgentParameters(descriptor=arch, blocks=blocks, buffers=buffers)
