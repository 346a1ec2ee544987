"""Dense feed-forward regression network, implemented directly on numpy.

Architecture: sigmoid hidden layers, linear output.  The training loss is

    mean squared error over (batch x output dims)
    + l1_kernel  * sum |W|   over hidden-layer kernels
    + l2_kernel  * sum W^2   over hidden-layer kernels
    + l2_bias    * sum b^2   over hidden-layer biases
    + l2_activity * mean over batch of sum a^2

where `a` are the hidden activations (all hidden layers) by default; the
activity penalty can instead target the final linear outputs via
``activity_target="output"``.  The output layer's kernel and bias are not
weight-regularized, so a constant target component can settle into the
output bias without penalty.

Gradients are exact analytic backprop, including every regularization term.
The L1 subgradient at an exact zero weight is taken as 0.  Optimization is
Adam with the standard bias correction.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, EmptyBatch, EmptyNetwork

CHECKPOINT_MAGIC = b"CCMLP\x00"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    learning_rate: float = 0.0005
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    epochs: int = 600
    batch_size: int = 1024
    l1_kernel: float = 1e-5
    l2_kernel: float = 1e-4
    l2_bias: float = 1e-4
    l2_activity: float = 1e-5
    activity_target: str = "hidden"  # "hidden" or "output"

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)


@dataclass
class Network:
    layer_sizes: list
    weights: list = field(repr=False)
    biases: list = field(repr=False)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "Network":
        return Network(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


def param_count(layer_sizes) -> int:
    return int(
        sum(
            layer_sizes[i] * layer_sizes[i + 1] + layer_sizes[i + 1]
            for i in range(len(layer_sizes) - 1)
        )
    )


def init_network(layer_sizes, seed: int) -> Network:
    """Uniform fan-in initialization: W ~ U(+-(1/fan_in)^0.5), biases zero."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3:
        raise EmptyNetwork("need at least one hidden layer")
    if any(s <= 0 for s in sizes):
        raise EmptyNetwork(f"non-positive layer size in {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(layer_sizes=sizes, weights=weights, biases=biases)


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Split by sign to stay overflow-free for large |z|.
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_batch(net: Network, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != net.layer_sizes[0]:
        raise DimensionMismatch(
            f"expected inputs with {net.layer_sizes[0]} columns, got shape {x.shape}"
        )
    if x.shape[0] == 0:
        raise EmptyBatch("empty input batch")
    return x


def forward_full(net: Network, x: np.ndarray):
    """All layer activations; activations[0] is the input batch."""
    x = _check_batch(net, x)
    acts = [x]
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = acts[-1] @ w + b
        acts.append(z if i == net.n_layers - 1 else _sigmoid(z))
    return acts


def forward(net: Network, x: np.ndarray) -> np.ndarray:
    return forward_full(net, x)[-1]


def loss(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig) -> float:
    acts = forward_full(net, x)
    return _loss_from_acts(net, acts, np.asarray(y, dtype=float), cfg)


def _loss_from_acts(net: Network, acts, y: np.ndarray, cfg: TrainConfig) -> float:
    pred = acts[-1]
    if pred.shape != y.shape:
        raise DimensionMismatch(f"targets {y.shape} do not match outputs {pred.shape}")
    batch = pred.shape[0]
    total = float(np.mean((pred - y) ** 2))
    for w in net.weights[:-1]:
        total += cfg.l1_kernel * float(np.sum(np.abs(w)))
        total += cfg.l2_kernel * float(np.sum(w * w))
    for b in net.biases[:-1]:
        total += cfg.l2_bias * float(np.sum(b * b))
    if cfg.activity_target == "output":
        total += cfg.l2_activity * float(np.sum(pred * pred)) / batch
    else:
        for a in acts[1:-1]:
            total += cfg.l2_activity * float(np.sum(a * a)) / batch
    return total


def gradients(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig):
    """Exact dLoss/d(weights, biases); returns (grad_w, grad_b, loss_value)."""
    acts = forward_full(net, x)
    y = np.asarray(y, dtype=float)
    value = _loss_from_acts(net, acts, y, cfg)
    pred = acts[-1]
    batch = pred.shape[0]

    delta = 2.0 * (pred - y) / pred.size
    if cfg.activity_target == "output":
        delta = delta + 2.0 * cfg.l2_activity * pred / batch

    grad_w = [None] * net.n_layers
    grad_b = [None] * net.n_layers
    for layer in range(net.n_layers - 1, -1, -1):
        a_prev = acts[layer]
        grad_w[layer] = a_prev.T @ delta
        grad_b[layer] = delta.sum(axis=0)
        if layer < net.n_layers - 1:
            w = net.weights[layer]
            grad_w[layer] += cfg.l1_kernel * np.sign(w) + 2.0 * cfg.l2_kernel * w
            grad_b[layer] += 2.0 * cfg.l2_bias * net.biases[layer]
        if layer > 0:
            upstream = delta @ net.weights[layer].T
            a_here = acts[layer]
            if cfg.activity_target != "output":
                upstream = upstream + 2.0 * cfg.l2_activity * a_here / batch
            delta = upstream * a_here * (1.0 - a_here)
    return grad_w, grad_b, value


@dataclass
class AdamState:
    m_w: list
    v_w: list
    m_b: list
    v_b: list
    step: int = 0

    @classmethod
    def for_network(cls, net: Network) -> "AdamState":
        return cls(
            m_w=[np.zeros_like(w) for w in net.weights],
            v_w=[np.zeros_like(w) for w in net.weights],
            m_b=[np.zeros_like(b) for b in net.biases],
            v_b=[np.zeros_like(b) for b in net.biases],
        )


def adam_step(net: Network, grad_w, grad_b, state: AdamState, cfg: TrainConfig) -> None:
    state.step += 1
    t = state.step
    corr1 = 1.0 - cfg.beta1**t
    corr2 = 1.0 - cfg.beta2**t
    for i in range(net.n_layers):
        for param, grad, m, v in (
            (net.weights[i], grad_w[i], state.m_w[i], state.v_w[i]),
            (net.biases[i], grad_b[i], state.m_b[i], state.v_b[i]),
        ):
            m *= cfg.beta1
            m += (1.0 - cfg.beta1) * grad
            v *= cfg.beta2
            v += (1.0 - cfg.beta2) * grad * grad
            param -= cfg.learning_rate * (m / corr1) / (np.sqrt(v / corr2) + cfg.adam_eps)


def train(net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig, seed: int):
    """Train in place; returns the per-epoch history of mean minibatch loss.

    Minibatch order is a fresh permutation each epoch from a generator
    seeded with `seed`; the final batch of an epoch may be partial.  The
    whole procedure is deterministic for equal inputs and seed.
    """
    x = _check_batch(net, x)
    y = np.asarray(y, dtype=float)
    if y.shape[0] != x.shape[0]:
        raise DimensionMismatch("feature/target row mismatch")
    rng = np.random.default_rng(seed)
    state = AdamState.for_network(net)
    n = x.shape[0]
    history = []
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        epoch_losses = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            gw, gb, value = gradients(net, x[idx], y[idx], cfg)
            if not np.isfinite(value):
                raise FloatingPointError("training loss became non-finite")
            adam_step(net, gw, gb, state, cfg)
            epoch_losses.append(value)
        history.append(float(np.mean(epoch_losses)))
    return history


def flatten_params(net: Network) -> np.ndarray:
    parts = []
    for w, b in zip(net.weights, net.biases):
        parts.append(w.ravel())
        parts.append(b.ravel())
    return np.concatenate(parts)


def set_params(net: Network, flat: np.ndarray) -> None:
    flat = np.asarray(flat, dtype=float)
    if flat.size != param_count(net.layer_sizes):
        raise DimensionMismatch("flat parameter vector has wrong length")
    pos = 0
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        net.weights[i] = flat[pos : pos + w.size].reshape(w.shape).copy()
        pos += w.size
        net.biases[i] = flat[pos : pos + b.size].copy()
        pos += b.size


def save_checkpoint(net: Network, path) -> None:
    """Binary layout: magic, u32 version, u32 n_sizes, i64 sizes, f64 params.

    All integers and floats little-endian; parameters are the flattened
    (W1, b1, W2, b2, ...) sequence, row-major kernels.
    """
    flat = flatten_params(net)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(net.layer_sizes)))
        fh.write(np.asarray(net.layer_sizes, dtype="<i8").tobytes())
        fh.write(flat.astype("<f8").tobytes())


def load_checkpoint(path) -> Network:
    from .errors import SchemaMismatch

    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[: len(CHECKPOINT_MAGIC)] != CHECKPOINT_MAGIC:
        raise SchemaMismatch(f"{path}: not a network checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, n_sizes = struct.unpack_from("<II", blob, off)
    if version != CHECKPOINT_VERSION:
        raise SchemaMismatch(f"{path}: unsupported checkpoint version {version}")
    off += 8
    sizes = np.frombuffer(blob, dtype="<i8", count=n_sizes, offset=off).tolist()
    off += 8 * n_sizes
    flat = np.frombuffer(blob, dtype="<f8", offset=off)
    net = init_network(sizes, seed=0)
    set_params(net, flat)
    return net
