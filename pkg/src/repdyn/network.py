"""From-scratch dense-network training engine.

Explicit weight/bias stacks in float64 numpy, reverse-mode gradients written
out by hand, Xavier-normal initialization with a tunable gain, full-batch
SGD or Adam on mean-squared error, and a probe hook that exposes the
designated hidden layer.  Double precision is deliberate: at small
initialization the tracked observables are tiny and single precision
corrupts the early plateau.

Randomness is a PCG64 stream per weight layer: ``SeedSequence(seed)`` is
spawned into one child per weight layer plus one final child for dropout
masks, in that order.  Identical configs therefore rebuild bitwise-identical
networks and training runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Optional

import numpy as np

LEAKY_SLOPE = 0.01
ELU_ALPHA = 1.0


class DivergenceError(RuntimeError):
    """Raised when a training step produces a non-finite loss."""


class Activation(Enum):
    LINEAR = "linear"
    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    ELU = "elu"
    TANH = "tanh"
    SWISH = "swish"


class Optimizer(Enum):
    SGD = "sgd"
    ADAM = "adam"


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def apply_activation(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.LINEAR:
        return z
    if kind is Activation.RELU:
        return np.maximum(z, 0.0)
    if kind is Activation.LEAKY_RELU:
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    if kind is Activation.ELU:
        return np.where(z > 0, z, ELU_ALPHA * (np.exp(np.minimum(z, 0.0)) - 1.0))
    if kind is Activation.TANH:
        return np.tanh(z)
    if kind is Activation.SWISH:
        return z * _sigmoid(z)
    raise ValueError(f"unknown activation {kind}")


def activation_grad(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.LINEAR:
        return np.ones_like(z)
    if kind is Activation.RELU:
        return (z > 0).astype(float)
    if kind is Activation.LEAKY_RELU:
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    if kind is Activation.ELU:
        return np.where(z > 0, 1.0, ELU_ALPHA * np.exp(np.minimum(z, 0.0)))
    if kind is Activation.TANH:
        t = np.tanh(z)
        return 1.0 - t * t
    if kind is Activation.SWISH:
        s = _sigmoid(z)
        return s * (1.0 + z * (1.0 - s))
    raise ValueError(f"unknown activation {kind}")


@dataclass(frozen=True)
class NetworkConfig:
    """Architecture and initialization of a uniform-width dense network.

    ``hidden_layers`` counts the activated layers; a final affine readout to
    ``output_dim`` is always appended.  ``hidden_index`` (1-based) selects
    the probed layer H and defaults to the layer halfway through the stack,
    rounding down.  ``init_gain`` multiplies the Xavier-normal standard
    deviation ``sqrt(2 / (fan_in + fan_out))``; biases start at zero.
    """

    input_dim: int
    output_dim: int
    hidden_layers: int
    units: int
    activation: Activation = Activation.LEAKY_RELU
    init_gain: float = 1.0
    skip_connections: bool = False
    dropout_p: float = 0.0
    hidden_index: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("input_dim and output_dim must be >= 1")
        if self.hidden_layers < 1:
            raise ValueError("hidden_layers must be >= 1")
        if self.units < 1:
            raise ValueError("units must be >= 1")
        if self.init_gain < 0 or not math.isfinite(self.init_gain):
            raise ValueError("init_gain must be finite and >= 0")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ValueError("dropout_p must lie in [0, 1)")
        if self.hidden_index is not None and not (1 <= self.hidden_index <= self.hidden_layers):
            raise ValueError("hidden_index must lie in [1, hidden_layers]")

    @property
    def probe_layer(self) -> int:
        """Resolved 1-based index of the probed hidden layer H."""
        if self.hidden_index is not None:
            return self.hidden_index
        return max(1, self.hidden_layers // 2)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["activation"] = self.activation.value
        d["hidden_index"] = self.probe_layer
        return d


@dataclass
class Layer:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)


@dataclass
class Network:
    layers: list[Layer]
    config: NetworkConfig
    dropout_rng: np.random.Generator = field(repr=False, default=None)


@dataclass(frozen=True)
class TrainSchedule:
    learning_rate: float
    epochs: int
    optimizer: Optimizer = Optimizer.SGD
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    record_every: int = 1

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.record_every < 1 or self.record_every > max(self.epochs, 1):
            raise ValueError("record_every must lie in [1, epochs]")

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["optimizer"] = self.optimizer.value
        return d


def build_network(config: NetworkConfig) -> Network:
    """Construct a network with per-layer seeded Xavier-normal weights."""
    dims = [config.input_dim] + [config.units] * config.hidden_layers + [config.output_dim]
    children = np.random.SeedSequence(config.seed).spawn(len(dims))  # layers + dropout
    layers = []
    for i in range(len(dims) - 1):
        fan_in, fan_out = dims[i], dims[i + 1]
        sigma = config.init_gain * math.sqrt(2.0 / (fan_in + fan_out))
        rng = np.random.default_rng(children[i])
        weight = rng.normal(0.0, 1.0, size=(fan_out, fan_in)) * sigma
        layers.append(Layer(weight=weight, bias=np.zeros(fan_out)))
    return Network(layers=layers, config=config,
                   dropout_rng=np.random.default_rng(children[-1]))


def _forward_full(net: Network, X: np.ndarray, train_mode: bool = False,
                  masks: Optional[list] = None):
    """Run the full stack; returns (pre-activations, activations, output, masks).

    ``activations[0]`` is the input; ``activations[k]`` is the value that
    layer k feeds forward (after activation, skip addition, and dropout).
    With skip connections enabled, hidden layer k >= 3 adds the activation
    from two layers back.  Dropout uses inverted scaling and applies only in
    train mode; pass `masks` to replay a frozen draw.
    """
    cfg = net.config
    X = np.atleast_2d(np.asarray(X, dtype=float))
    acts = [X]
    zs = []
    used_masks = []
    p = cfg.dropout_p
    for k in range(1, cfg.hidden_layers + 1):
        layer = net.layers[k - 1]
        z = acts[-1] @ layer.weight.T + layer.bias
        zs.append(z)
        a = apply_activation(cfg.activation, z)
        if cfg.skip_connections and k >= 3:
            source = acts[k - 2]
            if source.shape[1] != a.shape[1]:
                raise ValueError(
                    f"skip connection at layer {k} joins widths "
                    f"{source.shape[1]} and {a.shape[1]}")
            a = a + source
        if p > 0.0 and train_mode:
            if masks is not None:
                mask = masks[k - 1]
            else:
                mask = (net.dropout_rng.random(a.shape) >= p).astype(float)
            used_masks.append(mask)
            a = a * mask / (1.0 - p)
        acts.append(a)
    readout = net.layers[-1]
    output = acts[-1] @ readout.weight.T + readout.bias
    return zs, acts, output, used_masks


def forward(net: Network, x, train_mode: bool = False):
    """Evaluate the network; returns (hidden value at layer H, output).

    The hidden value is post-activation (including skip and, in train mode,
    dropout).  Accepts a single vector or a batch; shapes follow the input.
    """
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    _, acts, output, _ = _forward_full(net, x, train_mode=train_mode)
    hidden = acts[net.config.probe_layer]
    if single:
        return hidden[0], output[0]
    return hidden, output


def batch_loss(net: Network, X: np.ndarray, Y: np.ndarray,
               train_mode: bool = False, masks: Optional[list] = None) -> float:
    """Mean-squared-error loss 0.5 * <||f(x) - y||^2> over the batch."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    _, _, output, _ = _forward_full(net, X, train_mode=train_mode, masks=masks)
    return 0.5 * float(np.mean(np.sum((output - Y) ** 2, axis=1)))


def _backprop(net: Network, X: np.ndarray, Y: np.ndarray,
              train_mode: bool = True, masks: Optional[list] = None):
    """Loss and exact parameter gradients for the batch MSE."""
    cfg = net.config
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    n = X.shape[0]
    zs, acts, output, used_masks = _forward_full(net, X, train_mode=train_mode, masks=masks)
    diff = output - Y
    loss = 0.5 * float(np.mean(np.sum(diff**2, axis=1)))

    grads = [None] * len(net.layers)
    readout = net.layers[-1]
    d_out = diff / n
    grads[-1] = (d_out.T @ acts[-1], d_out.sum(axis=0))
    upstream = [np.zeros_like(a) for a in acts]
    upstream[cfg.hidden_layers] = d_out @ readout.weight
    p = cfg.dropout_p
    for k in range(cfg.hidden_layers, 0, -1):
        g = upstream[k]
        if p > 0.0 and train_mode:
            g = g * used_masks[k - 1] / (1.0 - p)
        if cfg.skip_connections and k >= 3:
            upstream[k - 2] += g
        dz = g * activation_grad(cfg.activation, zs[k - 1])
        layer = net.layers[k - 1]
        grads[k - 1] = (dz.T @ acts[k - 1], dz.sum(axis=0))
        upstream[k - 1] += dz @ layer.weight
    return loss, grads


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0


def _init_opt_state(net: Network, schedule: TrainSchedule):
    if schedule.optimizer is Optimizer.SGD:
        return None
    zeros = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    copies = [(np.zeros_like(l.weight), np.zeros_like(l.bias)) for l in net.layers]
    return AdamState(m=zeros, v=copies, t=0)


def train_step(net: Network, X: np.ndarray, Y: np.ndarray,
               schedule: TrainSchedule, opt_state=None):
    """One full-batch gradient step; returns (loss, updated opt_state).

    The reported loss is evaluated at the pre-update parameters.  A
    non-finite loss aborts with `DivergenceError`.
    """
    loss, grads = _backprop(net, X, Y, train_mode=True)
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite training loss: {loss}")
    lr = schedule.learning_rate
    if schedule.optimizer is Optimizer.SGD:
        for layer, (gw, gb) in zip(net.layers, grads):
            layer.weight -= lr * gw
            layer.bias -= lr * gb
        return loss, opt_state
    if opt_state is None:
        opt_state = _init_opt_state(net, schedule)
    opt_state.t += 1
    b1, b2, eps = schedule.beta1, schedule.beta2, schedule.eps
    bc1 = 1.0 - b1**opt_state.t
    bc2 = 1.0 - b2**opt_state.t
    for i, (layer, (gw, gb)) in enumerate(zip(net.layers, grads)):
        for m, v, g, param in ((opt_state.m[i][0], opt_state.v[i][0], gw, layer.weight),
                               (opt_state.m[i][1], opt_state.v[i][1], gb, layer.bias)):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            param -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)
    return loss, opt_state


@dataclass
class TrainingRecord:
    """Probe series from one training run, time-stamped in epoch units."""

    epochs: list[int]
    losses: list[float]
    probes: list[Any]
    config: NetworkConfig
    schedule: TrainSchedule
    seed: int

    def to_csv(self, path) -> None:
        """Write `epoch,loss,dh2,dy2,w` rows; probes must expose those fields."""
        import csv as _csv

        with open(path, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["epoch", "loss", "dh2", "dy2", "w"])
            for e, loss, probe in zip(self.epochs, self.losses, self.probes):
                writer.writerow(
                    [e] + [f"{v:.17g}" for v in
                           (loss, probe.dh2, probe.dy2, probe.w)])

    def manifest(self) -> dict:
        return {
            "network": self.config.to_dict(),
            "schedule": self.schedule.to_dict(),
            "seed": self.seed,
            "probe_mode": "post_activation",
            "recorded_epochs": len(self.epochs),
        }

    def write_manifest(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def train(net: Network, X: np.ndarray, Y: np.ndarray, schedule: TrainSchedule,
          probe: Optional[Callable[[Network], Any]] = None) -> TrainingRecord:
    """Run full-batch training, probing every `record_every` epochs.

    The probe (and the recorded loss) always see the network in eval mode;
    epoch t means "after t update steps", so epoch 0 is the initialization
    and the final epoch is always recorded.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[0] == 0:
        raise ValueError("training requires a nonempty dataset")
    epochs_out: list[int] = []
    losses: list[float] = []
    probes: list[Any] = []

    def record(epoch: int) -> None:
        epochs_out.append(epoch)
        losses.append(batch_loss(net, X, Y, train_mode=False))
        probes.append(probe(net) if probe is not None else None)

    record(0)
    opt_state = None
    for epoch in range(1, schedule.epochs + 1):
        _, opt_state = train_step(net, X, Y, schedule, opt_state)
        if epoch % schedule.record_every == 0 or epoch == schedule.epochs:
            record(epoch)
    return TrainingRecord(epochs=epochs_out, losses=losses, probes=probes,
                          config=net.config, schedule=schedule,
                          seed=net.config.seed)
