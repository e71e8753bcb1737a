"""Dense ReLU feed-forward networks with hand-written reverse mode.

A network is ``g = g_L o ... o g_1`` where every hidden layer applies
``relu(x @ A + b)`` and the output layer is affine. Everything is float64.
Batched evaluation (rows are samples) is the primary path; the single-vector
helpers ``ffn_forward`` / ``ffn_backward`` wrap it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ShapeError


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_grad(pre):
    # subgradient at exactly 0 is 0
    return (pre > 0.0).astype(np.float64)


@dataclass
class DenseLayer:
    """One affine map ``x @ weights + bias``, optionally followed by ReLU.

    ``mask`` marks trainable weight entries; masked-out entries are held at
    their current value (normally 0) for partially connected networks.
    """

    weights: np.ndarray
    bias: np.ndarray
    has_activation: bool = True
    mask: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.array(self.weights, dtype=np.float64, ndmin=2)
        self.bias = np.array(self.bias, dtype=np.float64).reshape(-1)
        if self.weights.ndim != 2 or self.weights.shape[1] != self.bias.shape[0]:
            raise ShapeError(
                f"weights {self.weights.shape} incompatible with bias {self.bias.shape}"
            )
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")
        if self.mask is not None:
            self.mask = np.asarray(self.mask, dtype=bool)
            if self.mask.shape != self.weights.shape:
                raise ShapeError("mask shape must equal weight shape")
            self.weights[~self.mask] = 0.0

    @property
    def in_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[1]

    def n_params(self) -> int:
        n_w = self.weights.size if self.mask is None else int(self.mask.sum())
        return n_w + self.bias.size


@dataclass
class GradientTape:
    """Gradients of ``upstream . g(x)`` summed over the batch.

    ``weights[l]`` / ``biases[l]`` mirror layer ``l``; ``input`` has the
    shape of the input that was fed forward.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    input: np.ndarray

    def __getitem__(self, key):
        layer, kind = key
        if kind in ("weights", "weight", "W"):
            return self.weights[layer]
        if kind in ("bias", "biases", "b"):
            return self.biases[layer]
        raise KeyError(kind)

    def flat(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out


@dataclass
class ForwardCache:
    inputs: list[np.ndarray] = field(default_factory=list)
    pre: list[np.ndarray] = field(default_factory=list)
    output: np.ndarray | None = None


class FeedForwardNet:
    """Stack of :class:`DenseLayer`; ReLU on every layer but the last."""

    def __init__(self, layers: Sequence[DenseLayer]):
        layers = list(layers)
        if not layers:
            raise ShapeError("a network needs at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.out_dim != b.in_dim:
                raise ShapeError(
                    f"layer widths do not chain: {a.out_dim} -> {b.in_dim}"
                )
        self.layers = layers

    @classmethod
    def random(cls, widths: Sequence[int], rng=None, bias_scale: float = 0.0):
        """He-initialised net with layer sizes ``widths = (H0, H1, ..., HL)``."""
        rng = np.random.default_rng(rng)
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ShapeError(f"invalid widths {widths}")
        layers = []
        L = len(widths) - 1
        for ell in range(L):
            fan_in, fan_out = widths[ell], widths[ell + 1]
            w = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out))
            b = rng.normal(0.0, bias_scale, size=fan_out) if bias_scale else np.zeros(fan_out)
            layers.append(DenseLayer(w, b, has_activation=ell < L - 1))
        return cls(layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def output_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def widths(self) -> list[int]:
        return [self.input_dim] + [layer.out_dim for layer in self.layers]

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def parameters(self) -> list[np.ndarray]:
        """Parameter arrays in (W_1, b_1, W_2, b_2, ...) order, by reference."""
        out = []
        for layer in self.layers:
            out.extend((layer.weights, layer.bias))
        return out

    def masks(self) -> list[np.ndarray | None]:
        out = []
        for layer in self.layers:
            out.extend((layer.mask, None))
        return out

    def copy(self) -> "FeedForwardNet":
        return FeedForwardNet(
            [
                DenseLayer(l.weights.copy(), l.bias.copy(), l.has_activation,
                           None if l.mask is None else l.mask.copy())
                for l in self.layers
            ]
        )

    def forward(self, X: np.ndarray, cache: ForwardCache | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.input_dim:
            raise ShapeError(f"expected input (n, {self.input_dim}), got {X.shape}")
        h = X
        for layer in self.layers:
            if cache is not None:
                cache.inputs.append(h)
            pre = h @ layer.weights + layer.bias
            if cache is not None:
                cache.pre.append(pre)
            h = np.maximum(pre, 0.0) if layer.has_activation else pre
        if cache is not None:
            cache.output = h
        return h

    def backward(self, cache: ForwardCache, upstream: np.ndarray) -> GradientTape:
        upstream = np.asarray(upstream, dtype=np.float64)
        if cache.output is None or upstream.shape != cache.output.shape:
            raise ShapeError(
                f"upstream shape {upstream.shape} does not match output "
                f"{None if cache.output is None else cache.output.shape}"
            )
        n_layers = len(self.layers)
        gw: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        gb: list[np.ndarray] = [None] * n_layers  # type: ignore[list-item]
        delta = upstream
        for ell in range(n_layers - 1, -1, -1):
            layer = self.layers[ell]
            if layer.has_activation:
                delta = delta * relu_grad(cache.pre[ell])
            g = cache.inputs[ell].T @ delta
            if layer.mask is not None:
                g = g * layer.mask
            gw[ell] = g
            gb[ell] = delta.sum(axis=0)
            delta = delta @ layer.weights.T
        return GradientTape(gw, gb, delta)


def ffn_forward(net: FeedForwardNet, x) -> np.ndarray:
    """Evaluate ``net`` on one input vector (or a batch, rows = samples)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        if x.shape[0] != net.input_dim:
            raise ShapeError(f"expected input of length {net.input_dim}, got {x.shape[0]}")
        return net.forward(x[None, :])[0]
    return net.forward(x)


def ffn_backward(net: FeedForwardNet, x, upstream) -> GradientTape:
    """Exact gradients of ``upstream . net(x)`` w.r.t. parameters and ``x``."""
    x = np.asarray(x, dtype=np.float64)
    upstream = np.asarray(upstream, dtype=np.float64)
    single = x.ndim == 1
    if single:
        if x.shape[0] != net.input_dim:
            raise ShapeError(f"expected input of length {net.input_dim}, got {x.shape[0]}")
        if upstream.shape != (net.output_dim,):
            raise ShapeError(
                f"upstream must have length {net.output_dim}, got {upstream.shape}"
            )
        x = x[None, :]
        upstream = upstream[None, :]
    cache = ForwardCache()
    net.forward(x, cache)
    tape = net.backward(cache, upstream)
    if single:
        tape.input = tape.input[0]
    return tape
