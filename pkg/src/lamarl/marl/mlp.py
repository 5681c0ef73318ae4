"""Fully connected networks with hand-written backprop, plus Adam / SGD."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LEAKY_SLOPE = 0.01


def leaky_relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, x * x.dtype.type(LEAKY_SLOPE))


def leaky_relu_grad(x: np.ndarray) -> np.ndarray:
    # arithmetic form: np.where / boolean indexing are several times slower here
    g = (x > 0).astype(x.dtype)
    g *= x.dtype.type(1 - LEAKY_SLOPE)
    g += x.dtype.type(LEAKY_SLOPE)
    return g


@dataclass
class MLP:
    """Leaky-ReLU hidden layers; ``output`` is ``"tanh"`` (actor) or ``"identity"`` (critic).

    ``weights[k]`` has shape (fan_in, fan_out) so a batch ``x`` of shape (B, in)
    maps as ``x @ W + b``.
    """

    sizes: tuple
    output: str = "identity"
    weights: list = field(default_factory=list)
    biases: list = field(default_factory=list)

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2:
            raise ValueError("an MLP needs at least input and output sizes")
        if self.output not in ("tanh", "identity"):
            raise ValueError(f"output activation must be 'tanh' or 'identity', got {self.output!r}")
        if self.weights:
            for k, (w, b) in enumerate(zip(self.weights, self.biases)):
                if w.shape != (self.sizes[k], self.sizes[k + 1]) or b.shape != (self.sizes[k + 1],):
                    raise ValueError(f"layer {k}: got W{w.shape} b{b.shape} for sizes {self.sizes}")

    @classmethod
    def init(cls, sizes: Sequence[int], output: str, rng: np.random.Generator, dtype=np.float64) -> "MLP":
        """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights and biases."""
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)).astype(dtype))
            biases.append(rng.uniform(-bound, bound, size=fan_out).astype(dtype))
        return cls(tuple(sizes), output, weights, biases)

    @classmethod
    def zeros(cls, sizes: Sequence[int], output: str, dtype=np.float64) -> "MLP":
        return cls(
            tuple(sizes),
            output,
            [np.zeros((a, b), dtype=dtype) for a, b in zip(sizes[:-1], sizes[1:])],
            [np.zeros(b, dtype=dtype) for b in sizes[1:]],
        )

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def params(self) -> list:
        """Flat, ordered list of parameter arrays: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLP":
        return MLP(self.sizes, self.output, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def astype(self, dtype) -> "MLP":
        return MLP(self.sizes, self.output, [w.astype(dtype) for w in self.weights], [b.astype(dtype) for b in self.biases])

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"input dimension mismatch: expected {self.in_dim}, got {x.shape[-1]}")
        return np.atleast_2d(x).astype(self.dtype, copy=False)

    def forward(self, x: np.ndarray, keep: bool = False):
        """Returns the (B, out) output, and with ``keep=True`` also the cache for ``backward``."""
        h = self._check(x)
        cache = [h]  # layer inputs; hidden pre-activations are recovered from their sign
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if k < last:
                h = leaky_relu(z)
                cache.append(h)
            else:
                h = np.tanh(z) if self.output == "tanh" else z
        if keep:
            cache.append(h)
            return h, cache
        return h

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)

    def backward(self, cache: list, grad_out: np.ndarray, need_params: bool = True, need_input: bool = True):
        """Backprop ``dL/d(output)``; returns (param grads in ``params()`` order or None, dL/d(input) or None)."""
        inputs, out = cache[:-1], cache[-1]
        g = np.asarray(grad_out, dtype=self.dtype).reshape(out.shape)
        if self.output == "tanh":
            g = g * (1 - out * out)
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            h_in = inputs[k]
            if need_params:
                grads[2 * k] = h_in.T @ g
                grads[2 * k + 1] = g.sum(axis=0)
            if k == 0 and not need_input:
                return grads, None
            g = g @ self.weights[k].T
            if k > 0:
                g *= leaky_relu_grad(h_in)  # leaky_relu keeps the sign of its input
        return (grads if need_params else None), g


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads)))


def clip_by_global_norm(grads: list, max_norm: Optional[float]) -> tuple[list, float, bool]:
    norm = global_norm(grads)
    if max_norm is None or norm <= max_norm or norm == 0:
        return grads, norm, False
    scale = max_norm / norm
    return [g * g.dtype.type(scale) for g in grads], norm, True


class SGD:
    def __init__(self, params: list, lr: float):
        self.params = params
        self.lr = lr

    def step(self, grads: list) -> None:
        for p, g in zip(self.params, grads):
            p -= p.dtype.type(self.lr) * g

    def state(self) -> dict:
        return {}


class Adam:
    """Adam with bias correction; updates the parameter arrays in place."""

    def __init__(self, params: list, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        step = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= p.dtype.type(step) * m / (np.sqrt(v) + p.dtype.type(self.eps))


def make_optimizer(name: str, params: list, lr: float):
    if name == "adam":
        return Adam(params, lr)
    if name == "sgd":
        return SGD(params, lr)
    raise ValueError(f"unknown optimizer {name!r}; use 'adam' or 'sgd'")
