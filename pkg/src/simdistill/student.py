"""Small feedforward student encoder with exact backprop and SGD.

Parameters of every layer live in one flat float64 vector; the per-layer
weight and bias arrays are views into it, so optimizer updates on the flat
vector are immediately visible to ``forward``.
"""

from __future__ import annotations

import bisect
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    BadMagic,
    DimensionMismatch,
    LengthMismatch,
    SizeMismatch,
    StaleCache,
    TruncatedFile,
)

ACTIVATIONS = ("identity", "relu")
CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1


class StudentNetwork:
    """Stack of affine layers, each followed by ``relu`` or ``identity``.

    Parameters
    ----------
    dims : sequence of int
        Layer widths including input and output, e.g. ``[32, 128, 64]``.
    activations : sequence of str, optional
        One tag per layer. Defaults to ReLU on hidden layers and identity on
        the last one.
    seed : int
        Seed for the uniform fan-in initialization.
    """

    def __init__(self, dims: Sequence[int], activations=None, seed: int = 0, init=True):
        dims = [int(d) for d in dims]
        if len(dims) < 2 or min(dims) < 1:
            raise ValueError(f"need at least input and output widths >= 1, got {dims}")
        n_layers = len(dims) - 1
        if activations is None:
            activations = ["relu"] * (n_layers - 1) + ["identity"]
        activations = list(activations)
        if len(activations) != n_layers or any(a not in ACTIVATIONS for a in activations):
            raise ValueError(f"bad activation tags {activations}")
        self.dims = dims
        self.activations = activations
        sizes = [dims[i + 1] * dims[i] + dims[i + 1] for i in range(n_layers)]
        self._flat = np.zeros(sum(sizes), dtype=np.float64)
        self.weights = []
        self.biases = []
        off = 0
        for i in range(n_layers):
            fan_in, fan_out = dims[i], dims[i + 1]
            w = self._flat[off : off + fan_out * fan_in].reshape(fan_out, fan_in)
            off += fan_out * fan_in
            b = self._flat[off : off + fan_out]
            off += fan_out
            self.weights.append(w)
            self.biases.append(b)
        self.version = 0
        if init:
            rng = np.random.default_rng(seed)
            for w, b in zip(self.weights, self.biases):
                bound = 1.0 / np.sqrt(w.shape[1])
                w[:] = rng.uniform(-bound, bound, size=w.shape)
                b[:] = rng.uniform(-bound, bound, size=b.shape)

    @property
    def input_dim(self) -> int:
        return self.dims[0]

    @property
    def output_dim(self) -> int:
        return self.dims[-1]

    @property
    def num_params(self) -> int:
        return self._flat.size

    @property
    def params(self) -> np.ndarray:
        """Read-only view of the flat parameter vector."""
        view = self._flat.view()
        view.setflags(write=False)
        return view

    def set_params(self, values) -> None:
        values = np.asarray(values, dtype=np.float64)
        if values.shape != self._flat.shape:
            raise LengthMismatch(f"expected {self._flat.size} params, got {values.size}")
        self._flat[:] = values
        self.version += 1

    def copy(self) -> "StudentNetwork":
        other = StudentNetwork(self.dims, self.activations, init=False)
        other.set_params(self._flat)
        return other

    def __repr__(self):
        return f"StudentNetwork(dims={self.dims}, activations={self.activations})"


@dataclass
class ForwardCache:
    net_id: int
    version: int
    inputs: list
    preacts: list


def forward(net: StudentNetwork, batch):
    """Return ``(embeddings, cache)``; embeddings are not normalized."""
    a = np.asarray(batch, dtype=np.float64)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.shape[1] != net.input_dim:
        raise DimensionMismatch(f"input has {a.shape[1]} columns, net expects {net.input_dim}")
    inputs, preacts = [], []
    for w, b, act in zip(net.weights, net.biases, net.activations):
        inputs.append(a)
        z = a @ w.T + b
        preacts.append(z)
        a = np.maximum(z, 0.0) if act == "relu" else z
    return a, ForwardCache(id(net), net.version, inputs, preacts)


def predict(net: StudentNetwork, batch, chunk: int = 4096) -> np.ndarray:
    """Forward pass without keeping a cache."""
    x = np.asarray(batch, dtype=np.float64)
    out = np.empty((x.shape[0], net.output_dim))
    for start in range(0, x.shape[0], chunk):
        out[start : start + chunk] = forward(net, x[start : start + chunk])[0]
    return out


def backward(net: StudentNetwork, cache: ForwardCache, grad_out) -> np.ndarray:
    """Gradient of ``sum(grad_out * embeddings)`` w.r.t. the flat params."""
    if cache.net_id != id(net) or cache.version != net.version:
        raise StaleCache("cache does not belong to the current parameters")
    g = np.asarray(grad_out, dtype=np.float64)
    if g.shape != cache.preacts[-1].shape:
        raise DimensionMismatch(f"grad shape {g.shape} != output shape {cache.preacts[-1].shape}")
    grads = []
    for i in reversed(range(len(net.weights))):
        if net.activations[i] == "relu":
            g = g * (cache.preacts[i] > 0.0)
        grads.append(g.sum(axis=0))
        grads.append((g.T @ cache.inputs[i]).ravel())
        if i:
            g = g @ net.weights[i]
    grads.reverse()
    return np.concatenate(grads)


@dataclass
class SgdState:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 1e-4
    velocity: np.ndarray | None = None


def sgd_step(state: SgdState, params, grads) -> np.ndarray:
    """One SGD-with-momentum step; weight decay applies to every parameter."""
    p = np.asarray(params, dtype=np.float64)
    g = np.asarray(grads, dtype=np.float64)
    if p.shape != g.shape:
        raise LengthMismatch(f"params {p.shape} vs grads {g.shape}")
    if state.velocity is None:
        state.velocity = np.zeros_like(p)
    elif state.velocity.shape != p.shape:
        raise LengthMismatch("velocity does not match params")
    g = g + state.weight_decay * p
    state.velocity = state.momentum * state.velocity + g
    return p - state.lr * state.velocity


@dataclass
class LrSchedule:
    base_lr: float = 0.01
    milestones: list = field(default_factory=lambda: [90, 120])
    factor: float = 0.2

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("factor must be positive")
        if any(b <= a for a, b in zip(self.milestones, self.milestones[1:])):
            raise ValueError("milestones must be strictly increasing")


def lr_at_epoch(schedule: LrSchedule, epoch: int) -> float:
    # a milestone takes effect at its own epoch
    drops = bisect.bisect_right(schedule.milestones, epoch)
    return schedule.base_lr * schedule.factor**drops


def save_checkpoint(path, net: StudentNetwork) -> None:
    parts = [CKPT_MAGIC, struct.pack("<BI", CKPT_VERSION, len(net.weights))]
    for w, act in zip(net.weights, net.activations):
        parts.append(struct.pack("<IIB", w.shape[1], w.shape[0], ACTIVATIONS.index(act)))
    parts.append(net.params.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path) -> StudentNetwork:
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise BadMagic(f"{path}: not a checkpoint file")
    if len(raw) < 9:
        raise TruncatedFile(f"{path}: header truncated")
    version, n_layers = struct.unpack_from("<BI", raw, 4)
    if version != CKPT_VERSION:
        raise SizeMismatch(f"{path}: unsupported checkpoint version {version}")
    off = 9
    if len(raw) < off + 9 * n_layers:
        raise TruncatedFile(f"{path}: layer table truncated")
    dims, acts = [], []
    for i in range(n_layers):
        fan_in, fan_out, tag = struct.unpack_from("<IIB", raw, off)
        off += 9
        if tag >= len(ACTIVATIONS):
            raise SizeMismatch(f"{path}: unknown activation tag {tag}")
        if i == 0:
            dims.append(fan_in)
        elif fan_in != dims[-1]:
            raise SizeMismatch(f"{path}: layer {i} input {fan_in} != previous output {dims[-1]}")
        dims.append(fan_out)
        acts.append(ACTIVATIONS[tag])
    net = StudentNetwork(dims, acts, init=False)
    need = 4 * net.num_params
    payload = raw[off:]
    if len(payload) < need:
        raise TruncatedFile(f"{path}: expected {need} parameter bytes, found {len(payload)}")
    if len(payload) > need:
        raise SizeMismatch(f"{path}: {len(payload) - need} trailing bytes")
    net.set_params(np.frombuffer(payload, dtype="<f4").astype(np.float64))
    return net


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over rows and its gradient w.r.t. ``logits``."""
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(z.shape[0])
    loss = -logp[rows, y].mean()
    grad = np.exp(logp)
    grad[rows, y] -= 1.0
    return float(loss), grad / z.shape[0]
