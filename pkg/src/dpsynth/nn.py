"""Minimal dense network machinery for desk-scale adversarial training.

Double-precision throughout. The backward pass can keep per-example gradients
(needed for clipped, noised critic updates); their sum equals the batch
gradient up to float associativity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

_ACTIVATIONS = ("relu", "leaky-relu", "tanh", "sigmoid", "identity")
_LEAKY_SLOPE = 0.2
_FORMAT_VERSION = 1


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "leaky-relu":
        return np.where(z > 0.0, z, _LEAKY_SLOPE * z)
    if name == "tanh":
        return np.tanh(z)
    if name == "sigmoid":
        return 1.0 / (1.0 + np.exp(-z))
    return z


def _act_grad(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    if name == "leaky-relu":
        return np.where(z > 0.0, 1.0, _LEAKY_SLOPE)
    if name == "tanh":
        return 1.0 - a * a
    if name == "sigmoid":
        return a * (1.0 - a)
    return np.ones_like(z)


@dataclass
class Layer:
    weight: np.ndarray  # (in_dim, out_dim)
    bias: np.ndarray  # (out_dim,)
    activation: str

    def __post_init__(self):
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.weight = np.asarray(self.weight, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[1],):
            raise ValueError("layer weight/bias shapes do not chain")
        if not (np.isfinite(self.weight).all() and np.isfinite(self.bias).all()):
            raise ValueError("non-finite layer parameters")


class Mlp:
    """A chain of dense layers with elementwise activations."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("need at least one layer")
        for a, b in zip(layers[:-1], layers[1:]):
            if a.weight.shape[1] != b.weight.shape[0]:
                raise ValueError("adjacent layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def create(cls, dims, activations, rng: np.random.Generator, scale: float | None = None) -> "Mlp":
        """Random init: weights ~ N(0, s^2) with s = scale or 1/sqrt(in_dim)."""
        if len(activations) != len(dims) - 1:
            raise ValueError("need one activation per layer")
        layers = []
        for i, act in enumerate(activations):
            s = scale if scale is not None else 1.0 / np.sqrt(dims[i])
            layers.append(
                Layer(rng.normal(0.0, s, size=(dims[i], dims[i + 1])), np.zeros(dims[i + 1]), act)
            )
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].weight.shape[1]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend((layer.weight, layer.bias))
        return out

    def clip_weights(self, bound: float) -> None:
        for layer in self.layers:
            np.clip(layer.weight, -bound, bound, out=layer.weight)
            np.clip(layer.bias, -bound, bound, out=layer.bias)

    def copy(self) -> "Mlp":
        return Mlp([Layer(l.weight.copy(), l.bias.copy(), l.activation) for l in self.layers])

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": _FORMAT_VERSION,
            "layers": [
                {
                    "weight": layer.weight.tolist(),
                    "bias": layer.bias.tolist(),
                    "activation": layer.activation,
                }
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Mlp":
        if d.get("version") != _FORMAT_VERSION:
            raise ValueError("unsupported model format version")
        return cls(
            [Layer(np.asarray(l["weight"]), np.asarray(l["bias"]), l["activation"]) for l in d["layers"]]
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Mlp":
        return cls.from_dict(json.loads(s))


@dataclass
class ForwardCache:
    batch: np.ndarray
    pre: list[np.ndarray]
    post: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.post[-1]


def forward(mlp: Mlp, batch: np.ndarray) -> ForwardCache:
    """Deterministic forward pass retaining intermediate activations."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mlp.in_dim:
        raise ValueError(f"batch width {x.shape} does not match input dim {mlp.in_dim}")
    pre, post = [], []
    for layer in mlp.layers:
        z = x @ layer.weight + layer.bias
        x = _act(layer.activation, z)
        pre.append(z)
        post.append(x)
    return ForwardCache(np.asarray(batch, dtype=np.float64), pre, post)


class GradientSet:
    """Per-parameter gradients, optionally carrying the per-example axis."""

    def __init__(self, grads: list[np.ndarray], per_example: bool):
        self.grads = grads
        self.per_example = per_example

    @property
    def batch_size(self) -> int:
        if not self.per_example:
            raise ValueError("batch-level gradients have no example axis")
        return self.grads[0].shape[0]

    def summed(self) -> "GradientSet":
        """Sum out the example axis; per-example gradients sum to batch ones."""
        if not self.per_example:
            return self
        return GradientSet([g.sum(axis=0) for g in self.grads], per_example=False)

    def example_norms(self) -> np.ndarray:
        sq = np.zeros(self.batch_size)
        for g in self.grads:
            sq += (g.reshape(g.shape[0], -1) ** 2).sum(axis=1)
        return np.sqrt(sq)

    def clipped(self, clip_norm: float) -> "GradientSet":
        """Rescale each example's concatenated gradient to norm <= clip_norm."""
        if clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        norms = self.example_norms()
        factor = np.minimum(1.0, clip_norm / np.maximum(norms, 1e-300))
        out = []
        for g in self.grads:
            shape = (g.shape[0],) + (1,) * (g.ndim - 1)
            out.append(g * factor.reshape(shape))
        return GradientSet(out, per_example=True)

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet([g * factor for g in self.grads], self.per_example)


def backward(
    mlp: Mlp, cache: ForwardCache, loss_grad: np.ndarray, per_example: bool = False
) -> tuple[GradientSet, np.ndarray]:
    """Backpropagate d(loss)/d(output) through the cached forward pass.

    Returns the parameter gradients (per example when requested) and the
    gradient with respect to the input batch.
    """
    delta = np.asarray(loss_grad, dtype=np.float64)
    if delta.shape != cache.output.shape:
        raise ValueError("loss_grad shape does not match the cached output")
    grads: list[np.ndarray] = []
    for i in range(len(mlp.layers) - 1, -1, -1):
        layer = mlp.layers[i]
        delta = delta * _act_grad(layer.activation, cache.pre[i], cache.post[i])
        x_in = cache.batch if i == 0 else cache.post[i - 1]
        if per_example:
            gw = np.einsum("bi,bo->bio", x_in, delta)
            gb = delta.copy()
        else:
            gw = x_in.T @ delta
            gb = delta.sum(axis=0)
        grads.append(gb)
        grads.append(gw)
        delta = delta @ layer.weight.T
    grads.reverse()
    return GradientSet(grads, per_example=per_example), delta


def backward_per_example(mlp: Mlp, cache: ForwardCache, loss_grad: np.ndarray) -> GradientSet:
    return backward(mlp, cache, loss_grad, per_example=True)[0]


class Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, mlp: Mlp, grads: GradientSet) -> None:
        apply_update(mlp, [self.lr * g for g in grads.summed().grads])


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: list[np.ndarray] | None = None
        self._v: list[np.ndarray] | None = None

    def step(self, mlp: Mlp, grads: GradientSet) -> None:
        gs = grads.summed().grads
        if self._m is None:
            self._m = [np.zeros_like(g) for g in gs]
            self._v = [np.zeros_like(g) for g in gs]
        self.t += 1
        updates = []
        for i, g in enumerate(gs):
            if not np.isfinite(g).all():
                raise ValueError("non-finite gradient")
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            mhat = self._m[i] / (1.0 - self.beta1**self.t)
            vhat = self._v[i] / (1.0 - self.beta2**self.t)
            updates.append(self.lr * mhat / (np.sqrt(vhat) + self.eps))
        apply_update(mlp, updates)


def apply_update(mlp: Mlp, scaled_grads: list[np.ndarray], weight_clip: float | None = None) -> None:
    """theta -= update for every parameter tensor, with an optional clip hook."""
    params = mlp.parameters()
    if len(params) != len(scaled_grads):
        raise ValueError("gradient count does not match parameter count")
    for p, g in zip(params, scaled_grads):
        if p.shape != g.shape:
            raise ValueError("gradient shape does not match parameter shape")
        if not np.isfinite(g).all():
            raise ValueError("non-finite gradient")
        p -= g
    if weight_clip is not None:
        mlp.clip_weights(weight_clip)


def optimizer_step(mlp: Mlp, grads: GradientSet, opt, weight_clip: float | None = None) -> Mlp:
    """Run one optimizer update in place and return the model."""
    opt.step(mlp, grads)
    if weight_clip is not None:
        mlp.clip_weights(weight_clip)
    return mlp
