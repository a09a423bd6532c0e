"""Small dense feedforward network with manual backprop and Adam.

Everything runs in float64 numpy. Inputs may be a single vector ``(in,)`` or a
batch ``(batch, in)``; outputs follow the same shape convention.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("tanh", "identity")


class NonFiniteError(FloatingPointError):
    """Raised when a gradient or loss stops being finite during training."""


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "tanh"

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError("weights must be a 2-d (out, in) matrix")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"biases shape {self.biases.shape} does not match {self.weights.shape[0]} outputs"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.biases))):
            raise ValueError("layer parameters must be finite")

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]


@dataclass
class ForwardCache:
    inputs: list  # input to each layer
    outputs: list  # post-activation output of each layer
    squeeze: bool


class FeatureNet:
    """The shared feature network ``f``. One parameter set, evaluated per document."""

    def __init__(self, layers):
        layers = list(layers)
        if not layers:
            raise ValueError("a feature net needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if prev.n_out != nxt.n_in:
                raise ValueError(
                    f"layer sizes do not chain: {prev.n_out} outputs feed {nxt.n_in} inputs"
                )
        self.layers = layers

    @classmethod
    def init(cls, input_dim, sizes, rng, activations="tanh"):
        """Glorot-uniform weights, zero biases."""
        sizes = list(sizes)
        if input_dim < 1 or not sizes or min(sizes) < 1:
            raise ValueError("layer sizes must be positive")
        if isinstance(activations, str):
            activations = [activations] * len(sizes)
        layers = []
        fan_in = input_dim
        for size, act in zip(sizes, activations, strict=True):
            limit = np.sqrt(6.0 / (fan_in + size))
            w = rng.uniform(-limit, limit, size=(size, fan_in))
            layers.append(Layer(w, np.zeros(size), act))
            fan_in = size
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def parameters(self):
        """Flat list of parameter arrays (views, so in-place updates stick)."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.biases))
        return out

    def copy(self) -> "FeatureNet":
        return FeatureNet(
            Layer(l.weights.copy(), l.biases.copy(), l.activation) for l in self.layers
        )

    def forward(self, x):
        """Return ``(f(x), cache)``."""
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 1
        a = x[None, :] if squeeze else x
        if a.ndim != 2 or a.shape[1] != self.input_dim:
            raise ValueError(
                f"expected input with {self.input_dim} features, got shape {x.shape}"
            )
        inputs, outputs = [], []
        for layer in self.layers:
            inputs.append(a)
            z = a @ layer.weights.T + layer.biases
            a = np.tanh(z) if layer.activation == "tanh" else z
            outputs.append(a)
        cache = ForwardCache(inputs, outputs, squeeze)
        return (a[0] if squeeze else a), cache

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, cache, upstream, tape):
        """Accumulate d(loss)/d(params) into ``tape`` and return d(loss)/d(input).

        ``upstream`` is d(loss)/d(output) with the same shape as the forward
        output. Contributions are added, never overwritten, so the two siamese
        branches can share one tape.
        """
        g = np.asarray(upstream, dtype=np.float64)
        if cache.squeeze:
            g = g[None, :]
        if g.shape != cache.outputs[-1].shape:
            raise ValueError(
                f"upstream gradient shape {g.shape} does not match output {cache.outputs[-1].shape}"
            )
        for i in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[i]
            if layer.activation == "tanh":
                a = cache.outputs[i]
                g = g * (1.0 - a * a)
            tape.grads[2 * i] += g.T @ cache.inputs[i]
            tape.grads[2 * i + 1] += g.sum(axis=0)
            g = g @ layer.weights
        return g[0] if cache.squeeze else g


@dataclass
class GradientTape:
    grads: list

    @classmethod
    def like(cls, params):
        return cls([np.zeros_like(p) for p in params])

    def zero(self):
        for g in self.grads:
            g.fill(0.0)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.epsilon <= 0.0:
            raise ValueError("Adam epsilon must be positive")


def adam_step(params, grads, state: AdamState):
    """One Adam update, in place on ``params`` and ``state``."""
    for g in grads:
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient at Adam step {state.t + 1}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    bc1 = 1.0 - state.beta1**state.t
    bc2 = 1.0 - state.beta2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v, strict=True):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.epsilon)
    return params, state


# ---------------------------------------------------------------- text format


def _fmt(values) -> str:
    return " ".join("%.17g" % v for v in np.ravel(values))


def dump_layers(net: FeatureNet) -> list[str]:
    lines = []
    for i, layer in enumerate(net.layers):
        lines.append(f"layer {i} {layer.n_in} {layer.n_out} {layer.activation}")
        for row in layer.weights:
            lines.append(_fmt(row))
        lines.append(_fmt(layer.biases))
    return lines


def _floats(line, n, what):
    vals = np.array([float(t) for t in line.split()], dtype=np.float64)
    if vals.shape != (n,):
        raise ValueError(f"{what}: expected {n} values, got {vals.size}")
    return vals


def parse_layer(header: str, lines) -> Layer:
    """Parse one ``layer`` record; ``lines`` is an iterator over the following lines."""
    parts = header.split()
    if len(parts) != 5 or parts[0] != "layer":
        raise ValueError(f"bad layer header {header!r}")
    n_in, n_out, act = int(parts[2]), int(parts[3]), parts[4]
    w = np.stack([_floats(next(lines), n_in, f"layer {parts[1]} weights") for _ in range(n_out)])
    b = _floats(next(lines), n_out, f"layer {parts[1]} biases")
    return Layer(w, b, act)
