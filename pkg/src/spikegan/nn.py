"""Small dense/1-D convolutional networks with hand-written backprop.

Used for the GAN discriminator and for the TSTR/TRTS classifiers.  Arrays
are batch-first: dense layers take ``(batch, features)``, convolutions take
``(batch, channels, length)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, NumericError, UsageError

EPS = 1e-7
ACTIVATIONS = ("relu", "leaky_relu", "sigmoid", "identity")


def sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _activate(pre, activation, slope):
    if activation == "identity":
        return pre
    if activation == "relu":
        return np.maximum(pre, 0.0)
    if activation == "leaky_relu":
        return np.where(pre > 0, pre, slope * pre)
    if activation == "sigmoid":
        return sigmoid(pre)
    raise ConfigError(f"unknown activation {activation!r}")


def _activation_grad(pre, out, activation, slope):
    if activation == "identity":
        return np.ones_like(pre)
    if activation == "relu":
        return (pre > 0).astype(float)
    if activation == "leaky_relu":
        return np.where(pre > 0, 1.0, slope)
    if activation == "sigmoid":
        return out * (1.0 - out)
    raise ConfigError(f"unknown activation {activation!r}")


@dataclass
class Dense:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "identity"
    slope: float = 0.01

    @property
    def in_features(self) -> int:
        return self.weight.shape[1]

    @property
    def out_features(self) -> int:
        return self.weight.shape[0]

    def params(self):
        return [self.weight, self.bias]


@dataclass
class Conv1d:
    weight: np.ndarray  # (out_channels, in_channels, kernel)
    bias: np.ndarray  # (out_channels,)
    stride: int = 1
    activation: str = "identity"
    slope: float = 0.01

    @property
    def in_channels(self) -> int:
        return self.weight.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    @property
    def kernel(self) -> int:
        return self.weight.shape[2]

    def output_length(self, length: int) -> int:
        return conv_output_length(length, self.kernel, self.stride)

    def params(self):
        return [self.weight, self.bias]


@dataclass
class Flatten:
    def params(self):
        return []


def conv_output_length(length: int, kernel: int, stride: int) -> int:
    if kernel < 1 or stride < 1:
        raise ConfigError(f"kernel and stride must be >= 1 (got k={kernel}, s={stride})")
    if length < kernel:
        raise ConfigError(f"input length {length} shorter than kernel {kernel}")
    return (length - kernel) // stride + 1


@dataclass
class Network:
    """Ordered stack of layers (the discriminator / classifier parameters)."""

    layers: list = field(default_factory=list)

    def params(self) -> list[np.ndarray]:
        return [p for layer in self.layers for p in layer.params()]

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params())

    def with_params(self, arrays: Sequence[np.ndarray]) -> "Network":
        arrays = list(arrays)
        if len(arrays) != len(self.params()):
            raise ConfigError("parameter list does not match network layout")
        new_layers = []
        it = iter(arrays)
        for layer in self.layers:
            if isinstance(layer, Dense):
                new_layers.append(Dense(next(it), next(it), layer.activation, layer.slope))
            elif isinstance(layer, Conv1d):
                new_layers.append(
                    Conv1d(next(it), next(it), layer.stride, layer.activation, layer.slope)
                )
            else:
                new_layers.append(Flatten())
        return Network(new_layers)

    def copy(self) -> "Network":
        return self.with_params([p.copy() for p in self.params()])

    def vector(self) -> np.ndarray:
        ps = self.params()
        if not ps:
            return np.zeros(0)
        return np.concatenate([p.ravel() for p in ps])

    def from_vector(self, vec: np.ndarray) -> "Network":
        vec = np.asarray(vec, dtype=float)
        if vec.size != self.n_params:
            raise ConfigError(f"vector length {vec.size} != {self.n_params} parameters")
        out, offset = [], 0
        for p in self.params():
            out.append(vec[offset : offset + p.size].reshape(p.shape).copy())
            offset += p.size
        return self.with_params(out)


class ConvLayerSpec(NamedTuple):
    out_channels: int
    kernel: int
    stride: int


class DenseLayerSpec(NamedTuple):
    out_features: int


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def dense_net(
    sizes: Sequence[int],
    rng: np.random.Generator,
    activation: str = "relu",
    output: str = "sigmoid",
    slope: float = 0.01,
) -> Network:
    """Fully connected net, e.g. ``sizes=(74, 128, 1)``."""
    if len(sizes) < 2:
        raise ConfigError("need at least input and output sizes")
    layers = []
    for i, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = output if i == len(sizes) - 2 else activation
        w = _glorot(rng, (n_out, n_in), n_in, n_out)
        layers.append(Dense(w, np.zeros(n_out), act, slope))
    return Network(layers)


def conv_net(
    in_channels: int,
    length: int,
    specs: Sequence,
    rng: np.random.Generator,
    activation: str = "leaky_relu",
    output: str = "sigmoid",
    slope: float = 0.01,
) -> Network:
    """Temporal conv stack followed by a flatten and dense head.

    ``specs`` is a sequence of :class:`ConvLayerSpec` optionally ending in a
    :class:`DenseLayerSpec`; without one a single-unit dense head is added.
    """
    specs = list(specs)
    if not specs or not isinstance(specs[0], ConvLayerSpec):
        raise ConfigError("conv spec must start with a convolution layer")
    head = specs.pop() if isinstance(specs[-1], DenseLayerSpec) else DenseLayerSpec(1)
    if any(not isinstance(s, ConvLayerSpec) for s in specs):
        raise ConfigError("dense layers may only appear at the end of a conv spec")
    layers: list = []
    ch, ln = in_channels, length
    for spec in specs:
        ln = conv_output_length(ln, spec.kernel, spec.stride)
        w = _glorot(
            rng,
            (spec.out_channels, ch, spec.kernel),
            ch * spec.kernel,
            spec.out_channels * spec.kernel,
        )
        layers.append(Conv1d(w, np.zeros(spec.out_channels), spec.stride, activation, slope))
        ch = spec.out_channels
    layers.append(Flatten())
    n_in = ch * ln
    w = _glorot(rng, (head.out_features, n_in), n_in, head.out_features)
    layers.append(Dense(w, np.zeros(head.out_features), output, slope))
    return Network(layers)


class GradientTape:
    """Per-layer cached inputs, pre-activations and outputs of one forward pass."""

    def __init__(self, network: Network):
        self._network_id = id(network)
        self.entries: list[tuple] = []
        self.consumed = False

    def record(self, *entry):
        self.entries.append(entry)


def _conv_patches(x, kernel, stride, l_out):
    idx = np.arange(l_out)[:, None] * stride + np.arange(kernel)[None, :]
    patches = x[:, :, idx].transpose(0, 2, 1, 3)  # (B, L_out, C, k)
    return patches.reshape(x.shape[0] * l_out, -1)


def forward(network: Network, x: np.ndarray) -> tuple[np.ndarray, GradientTape]:
    x = np.asarray(x, dtype=float)
    tape = GradientTape(network)
    h = x
    for n, layer in enumerate(network.layers):
        if isinstance(layer, Dense):
            if h.ndim != 2 or h.shape[1] != layer.in_features:
                raise ConfigError(
                    f"layer {n}: dense expects (batch, {layer.in_features}), got {h.shape}"
                )
            pre = h @ layer.weight.T + layer.bias
            out = _activate(pre, layer.activation, layer.slope)
            tape.record(h, pre, out)
        elif isinstance(layer, Conv1d):
            if h.ndim != 3 or h.shape[1] != layer.in_channels:
                raise ConfigError(
                    f"layer {n}: conv expects (batch, {layer.in_channels}, L), got {h.shape}"
                )
            l_out = layer.output_length(h.shape[2])
            patches = _conv_patches(h, layer.kernel, layer.stride, l_out)
            w2 = layer.weight.reshape(layer.out_channels, -1)
            pre = (patches @ w2.T).reshape(h.shape[0], l_out, -1).transpose(0, 2, 1)
            pre = pre + layer.bias[:, None]
            out = _activate(pre, layer.activation, layer.slope)
            tape.record(h, pre, out, patches)
        elif isinstance(layer, Flatten):
            tape.record(h.shape)
            out = h.reshape(h.shape[0], -1)
        else:
            raise ConfigError(f"unknown layer type {type(layer).__name__}")
        h = out
    return h, tape


def backward(network: Network, tape: GradientTape, output_grad: np.ndarray) -> list[np.ndarray]:
    """Gradients of ``sum(output * output_grad)`` w.r.t. ``network.params()``.

    The tape is consumed; calling again with the same tape raises.
    """
    if tape.consumed:
        raise UsageError("gradient tape already consumed by a previous backward pass")
    if tape._network_id != id(network) or len(tape.entries) != len(network.layers):
        raise UsageError("tape was not produced by a forward pass of this network")
    tape.consumed = True
    grad = np.asarray(output_grad, dtype=float)
    grads_rev: list[np.ndarray] = []
    for layer, entry in zip(reversed(network.layers), reversed(tape.entries)):
        if isinstance(layer, Dense):
            x, pre, out = entry
            dpre = grad * _activation_grad(pre, out, layer.activation, layer.slope)
            grads_rev += [dpre.sum(axis=0), dpre.T @ x]
            grad = dpre @ layer.weight
        elif isinstance(layer, Conv1d):
            x, pre, out, patches = entry
            dpre = grad * _activation_grad(pre, out, layer.activation, layer.slope)
            batch, n_out, l_out = pre.shape
            d2 = dpre.transpose(0, 2, 1).reshape(batch * l_out, n_out)
            w2 = layer.weight.reshape(n_out, -1)
            grads_rev += [dpre.sum(axis=(0, 2)), (d2.T @ patches).reshape(layer.weight.shape)]
            dpatches = (d2 @ w2).reshape(batch, l_out, layer.in_channels, layer.kernel)
            dpatches = dpatches.transpose(0, 2, 1, 3)
            dx = np.zeros_like(x)
            starts = np.arange(l_out) * layer.stride
            for j in range(layer.kernel):
                # positions are distinct for a fixed tap j, so fancy += is safe
                dx[:, :, starts + j] += dpatches[:, :, :, j]
            grad = dx
        else:
            (shape,) = entry
            grad = grad.reshape(shape)
    return grads_rev[::-1]


def gan_losses(d_real, d_synth, mode: str = "non_saturating"):
    """Discriminator and generator losses from probabilities ``D(x)``.

    ``disc_loss = -[log d_real + log(1 - d_synth)]``; the generator loss is
    ``log(1 - d_synth)`` (saturating) or ``-log d_synth`` (non-saturating).
    Probabilities are clamped to ``[EPS, 1 - EPS]`` inside the logs.
    """
    dr = np.clip(np.asarray(d_real, dtype=float), EPS, 1.0 - EPS)
    ds = np.clip(np.asarray(d_synth, dtype=float), EPS, 1.0 - EPS)
    disc = -(np.log(dr) + np.log1p(-ds))
    if mode == "saturating":
        gen = np.log1p(-ds)
    elif mode == "non_saturating":
        gen = -np.log(ds)
    else:
        raise ConfigError(f"unknown generator loss mode {mode!r}")
    if np.ndim(disc) == 0:
        return float(disc), float(gen)
    return disc, gen


def sgd_step(params, grads, learning_rate: float, ascent: bool = False) -> list[np.ndarray]:
    """Return ``p - lr*g`` (or ``p + lr*g`` when ``ascent``) for each pair."""
    params, grads = list(params), list(grads)
    if len(params) != len(grads):
        raise UsageError("params and grads differ in length")
    for n, (p, g) in enumerate(zip(params, grads)):
        if np.shape(p) != np.shape(g):
            raise UsageError(f"shape mismatch at index {n}: {np.shape(p)} vs {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise NumericError(
                "non-finite gradient, step aborted",
                {"index": n, "n_nonfinite": int(np.sum(~np.isfinite(g)))},
            )
    sign = 1.0 if ascent else -1.0
    return [p + sign * learning_rate * g for p, g in zip(params, grads)]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and its gradient w.r.t. the logits."""
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = logits.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
