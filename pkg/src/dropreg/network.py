"""Feedforward network with inverted dropout, backprop, and momentum SGD.

Layers are dense. A layer marked ``dropout_enabled`` multiplies its *input*
by a fresh Bernoulli(1-p) mask on every training-mode forward pass, scaled
by 1/(1-p) so evaluation needs no rescaling (inverted dropout). This keeps
evaluation scale-free even though the rate p may change between epochs.
Dropout is never applied to the raw input row (the first layer must have it
disabled); masking the final layer's input is what drops the last hidden
activation.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, DomainError, ParseError, UsageError
from .numerics import Matrix, RngStream, bernoulli_mask, softmax_rows

ACTIVATIONS = ("sigmoid", "relu", "softmax")

CHECKPOINT_MAGIC = b"DROPREG-CKPT-1"

LOG_FLOOR = 1e-12  # added inside log() so a zero probability cannot give -inf


@dataclass(frozen=True)
class LayerSpec:
    """One dense layer: dimensions, activation, and whether its input is masked."""

    in_dim: int
    out_dim: int
    activation: str
    dropout_enabled: bool = False

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise DomainError(f"layer dims must be positive, got {self.in_dim}x{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise DomainError(f"unknown activation {self.activation!r}")


@dataclass
class OptimizerConfig:
    """SGD-with-momentum hyperparameters for one training run."""

    learning_rate: float = 1e-4
    momentum: float = 0.9
    batch_size: int = 100
    epochs: int = 60

    def __post_init__(self):
        if not (self.learning_rate > 0):
            raise DomainError(f"learning_rate must be positive, got {self.learning_rate}")
        if not (0.0 <= self.momentum < 1.0):
            raise DomainError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {self.epochs}")


def _validate_specs(specs):
    if not specs:
        raise DomainError("a network needs at least one layer")
    for i, spec in enumerate(specs):
        last = i == len(specs) - 1
        if spec.activation == "softmax" and not last:
            raise DomainError(f"softmax activation only permitted on the final layer (layer {i})")
        if i > 0 and specs[i - 1].out_dim != spec.in_dim:
            raise DimensionError(
                f"layer {i - 1} out_dim {specs[i - 1].out_dim} != layer {i} in_dim {spec.in_dim}"
            )
    if specs[-1].activation != "softmax":
        raise DomainError(
            f"the final layer must be softmax (classifier head), got {specs[-1].activation!r}")
    if specs[0].dropout_enabled:
        raise DomainError("the first layer cannot mask its input (that would drop raw features)")


class Network:
    """Dense layer stack owning weights, biases, and momentum slots.

    Weights are (in_dim, out_dim) so activations flow as ``y = x @ W + b``
    with rows holding batch samples. ``rng`` seeds the per-layer uniform
    initialization in +-sqrt(6 / (in_dim + out_dim)).
    """

    def __init__(self, specs, rng: RngStream):
        specs = list(specs)
        _validate_specs(specs)
        self.specs = specs
        self.weights = []
        self.biases = []
        for i, spec in enumerate(specs):
            bound = np.sqrt(6.0 / (spec.in_dim + spec.out_dim))
            layer_rng = rng.child("init", i)
            w = (layer_rng.uniform((spec.in_dim, spec.out_dim)) * 2.0 - 1.0) * bound
            self.weights.append(w)
            self.biases.append(np.zeros((1, spec.out_dim)))
        self.vel_w = [np.zeros_like(w) for w in self.weights]
        self.vel_b = [np.zeros_like(b) for b in self.biases]
        self.version = 0

    @property
    def in_dim(self) -> int:
        return self.specs[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.specs[-1].out_dim

    def clone(self) -> "Network":
        """Deep copy, momentum slots included."""
        return copy.deepcopy(self)

    def param_count(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)


@dataclass
class ForwardCache:
    """Per-layer intermediates from one training-mode forward pass."""

    inputs: list = field(default_factory=list)  # layer input after mask+scale
    pre_activations: list = field(default_factory=list)
    masks: list = field(default_factory=list)  # None where no mask was applied
    outputs: Matrix = None
    dropout_rate: float = 0.0
    net_id: int = 0
    net_version: int = 0


def _activate(z, kind):
    if kind == "sigmoid":
        # piecewise form avoids exp overflow for large |z|
        out = np.empty_like(z)
        pos = z >= 0
        out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        out[~pos] = ez / (1.0 + ez)
        return out
    if kind == "relu":
        return np.maximum(z, 0.0)
    return softmax_rows(z)


def forward(net: Network, x: Matrix, dropout_rate: float, mode: str = "eval",
            rng: RngStream | None = None):
    """Run the network on a batch, returning (predictions, cache).

    In ``train`` mode every dropout-enabled layer masks its input with a
    fresh Bernoulli(1-p) draw scaled by 1/(1-p); the masks are taken from
    per-layer children of ``rng``, so two calls with the same stream repeat
    the same masks and distinct streams give independent ones. In ``eval``
    mode no masks are applied and the pass is deterministic.
    """
    if mode not in ("train", "eval"):
        raise DomainError(f"mode must be 'train' or 'eval', got {mode!r}")
    if not (0.0 <= dropout_rate < 1.0):
        raise DomainError(f"dropout rate must be in [0, 1), got {dropout_rate}")
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"input must be a 2-D batch, got ndim={x.ndim}")
    if x.shape[1] != net.in_dim:
        raise DimensionError(
            f"input has {x.shape[1]} features but the first layer expects {net.in_dim}"
        )
    masking = mode == "train" and dropout_rate > 0.0
    if masking and rng is None and any(s.dropout_enabled for s in net.specs):
        raise UsageError("training-mode forward with dropout needs an rng stream")

    cache = ForwardCache(dropout_rate=dropout_rate, net_id=id(net), net_version=net.version)
    a = x
    for i, spec in enumerate(net.specs):
        mask = None
        a_in = a
        if masking and spec.dropout_enabled:
            mask = bernoulli_mask(rng.child("mask", i), a.shape[0], a.shape[1],
                                  1.0 - dropout_rate)
            a_in = a * mask / (1.0 - dropout_rate)
        # an overflow to inf here surfaces as a DomainError at the softmax head
        with np.errstate(over="ignore", invalid="ignore"):
            z = a_in @ net.weights[i] + net.biases[i]
        a = _activate(z, spec.activation)
        cache.inputs.append(a_in)
        cache.pre_activations.append(z)
        cache.masks.append(mask)
    cache.outputs = a
    return a, cache


def _check_probability_rows(m, what):
    if np.any(m < -1e-12) or np.any(m > 1.0 + 1e-12):
        raise DomainError(f"{what} rows must have entries in [0, 1]")
    sums = m.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-9):
        raise DomainError(f"{what} rows must sum to 1 (worst sum {sums[np.argmax(np.abs(sums - 1.0))]})")


def cross_entropy(predictions: Matrix, labels: Matrix) -> float:
    """Mean categorical cross-entropy over batch rows, in nats.

    Computed as the row mean of ``-sum_c label * ln(prediction + 1e-12)``;
    the log floor keeps zero probabilities finite and sits far below every
    test tolerance. The result is clamped at zero (the floor can push a
    perfect prediction a hair negative).
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.shape != y.shape:
        raise DimensionError(f"predictions {p.shape} and labels {y.shape} differ in shape")
    _check_probability_rows(p, "prediction")
    per_row = -(y * np.log(p + LOG_FLOOR)).sum(axis=1)
    return max(0.0, float(per_row.mean()))


@dataclass
class Gradients:
    """Per-layer parameter gradients matching a network's weight shapes."""

    weights: list
    biases: list


def backward(net: Network, cache: ForwardCache, labels: Matrix) -> Gradients:
    """Backpropagate the mean cross-entropy loss through a cached forward pass.

    The cached masks gate gradients exactly as they gated activations, so a
    dropped unit receives zero gradient. The cache must come from a
    training-mode forward on this same network with its current parameters.
    """
    if cache.net_id != id(net) or cache.net_version != net.version:
        raise UsageError("cache is stale or belongs to a different network")
    if net.specs[-1].activation != "softmax":
        raise UsageError("backward assumes a softmax output layer")
    y = np.asarray(labels, dtype=np.float64)
    probs = cache.outputs
    if y.shape != probs.shape:
        raise DimensionError(f"labels {y.shape} do not match predictions {probs.shape}")
    n = probs.shape[0]
    keep_scale = 1.0 / (1.0 - cache.dropout_rate) if cache.dropout_rate > 0 else 1.0

    grad_w = [None] * len(net.specs)
    grad_b = [None] * len(net.specs)
    delta = (probs - y) / n  # softmax + cross-entropy shortcut
    for i in range(len(net.specs) - 1, -1, -1):
        grad_w[i] = cache.inputs[i].T @ delta
        grad_b[i] = delta.sum(axis=0, keepdims=True)
        if i == 0:
            break
        upstream = delta @ net.weights[i].T
        if cache.masks[i] is not None:
            upstream = upstream * cache.masks[i] * keep_scale
        spec = net.specs[i - 1]
        if spec.activation == "sigmoid":
            a_prev = _activate(cache.pre_activations[i - 1], "sigmoid")
            delta = upstream * a_prev * (1.0 - a_prev)
        elif spec.activation == "relu":
            delta = upstream * (cache.pre_activations[i - 1] > 0)
        else:
            raise UsageError("softmax below the final layer is not supported")
    return Gradients(grad_w, grad_b)


def sgd_momentum_step(net: Network, grads: Gradients, cfg: OptimizerConfig) -> Network:
    """Classical momentum update: v <- mu*v + g, w <- w - lr*v. Mutates ``net``."""
    for i in range(len(net.specs)):
        if grads.weights[i].shape != net.weights[i].shape:
            raise DimensionError(
                f"gradient shape {grads.weights[i].shape} != weight shape {net.weights[i].shape} (layer {i})"
            )
        net.vel_w[i] = cfg.momentum * net.vel_w[i] + grads.weights[i]
        net.vel_b[i] = cfg.momentum * net.vel_b[i] + grads.biases[i]
        net.weights[i] = net.weights[i] - cfg.learning_rate * net.vel_w[i]
        net.biases[i] = net.biases[i] - cfg.learning_rate * net.vel_b[i]
    net.version += 1
    return net


def empirical_risk(net: Network, dataset, dropout_rate: float = 0.0,
                   mode: str = "eval", rng: RngStream | None = None) -> float:
    """Mean cross-entropy of the network over a dataset.

    Defaults to a deterministic, mask-free pass so risks feeding the
    controller are noise-free; pass ``mode='train'`` with a stream for a
    stochastic estimate.
    """
    if len(dataset.features) == 0:
        raise DomainError("empirical risk over an empty dataset is undefined")
    preds, _ = forward(net, dataset.features, dropout_rate, mode, rng)
    risk = cross_entropy(preds, dataset.labels)
    if not np.isfinite(risk):
        raise DomainError("empirical risk is non-finite")
    return risk


def save_checkpoint(path, net: Network, dropout_rate: float, epoch: int,
                    rng_state: dict | None = None):
    """Write layer specs, parameters, momentum slots, and RNG cursor to ``path``.

    Format: magic line ``DROPREG-CKPT-1``, one JSON header line, then the
    arrays named in the header concatenated as little-endian float64 bytes.
    """
    arrays = []
    manifest = []
    for group, mats in (("w", net.weights), ("b", net.biases),
                        ("vw", net.vel_w), ("vb", net.vel_b)):
        for i, m in enumerate(mats):
            manifest.append({"name": f"{group}{i}", "shape": list(m.shape)})
            arrays.append(np.ascontiguousarray(m, dtype="<f8"))
    header = {
        "layers": [
            {"in_dim": s.in_dim, "out_dim": s.out_dim, "activation": s.activation,
             "dropout_enabled": s.dropout_enabled}
            for s in net.specs
        ],
        "dropout_rate": dropout_rate,
        "epoch": epoch,
        "rng_state": rng_state,
        "arrays": manifest,
    }
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC + b"\n")
        f.write(json.dumps(header).encode("utf-8") + b"\n")
        for arr in arrays:
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Read a checkpoint, returning (network, metadata dict).

    Metadata carries ``dropout_rate`` (the rate in force when the saved
    parameters were fit), ``epoch``, and ``rng_state``.
    """
    with open(path, "rb") as f:
        blob = f.read()
    if not blob.startswith(CHECKPOINT_MAGIC + b"\n"):
        raise ParseError(f"bad checkpoint magic in {path}", offset=0)
    header_start = len(CHECKPOINT_MAGIC) + 1
    header_end = blob.find(b"\n", header_start)
    if header_end < 0:
        raise ParseError(f"truncated checkpoint header in {path}", offset=header_start)
    try:
        header = json.loads(blob[header_start:header_end].decode("utf-8"))
    except json.JSONDecodeError as e:
        raise ParseError(f"unreadable checkpoint header in {path}: {e}", offset=header_start)
    specs = [LayerSpec(l["in_dim"], l["out_dim"], l["activation"], l["dropout_enabled"])
             for l in header["layers"]]
    net = Network(specs, RngStream(0))
    offset = header_end + 1
    groups = {"w": net.weights, "b": net.biases, "vw": net.vel_w, "vb": net.vel_b}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        nbytes = 8 * int(np.prod(shape))
        if offset + nbytes > len(blob):
            raise ParseError(f"truncated checkpoint payload in {path}", offset=offset)
        arr = np.frombuffer(blob[offset:offset + nbytes], dtype="<f8").reshape(shape).copy()
        group = entry["name"].rstrip("0123456789")
        index = int(entry["name"][len(group):])
        groups[group][index] = arr
        offset += nbytes
    meta = {"dropout_rate": header["dropout_rate"], "epoch": header["epoch"],
            "rng_state": header["rng_state"]}
    return net, meta
