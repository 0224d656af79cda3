"""Minimal dense network engine: forward, backward, MSE and AdaGrad.

Everything runs on float64 numpy arrays. Inputs may be a single vector of
shape ``(d,)`` or a batch of row vectors of shape ``(n, d)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:  # fused AdaGrad kernel; falls back to numpy with the same op order
    import numba
except ImportError:  # pragma: no cover
    numba = None

IDENTITY = "identity"
RELU = "relu"
ACTIVATIONS = (IDENTITY, RELU)


class NumericalError(ArithmeticError):
    """Raised when a non-finite value would corrupt the parameters."""


@dataclass
class DenseLayer:
    """One affine stage ``activation(W @ x + b)``."""

    weights: np.ndarray
    bias: np.ndarray
    activation: str = IDENTITY

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.bias = np.asarray(self.bias, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"weights must be 2-D, got shape {self.weights.shape}")
        if self.bias.shape != (self.weights.shape[0],):
            raise ValueError(
                f"bias shape {self.bias.shape} does not match "
                f"{self.weights.shape[0]} output rows"
            )
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not (np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias))):
            raise ValueError("layer parameters must be finite")

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def size(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class ForwardCache:
    """Intermediates of one forward pass.

    ``inputs[i]`` is what layer ``i`` consumed, ``pre[i]`` its affine output
    and ``post[i]`` its activated output.
    """

    inputs: list = field(default_factory=list)
    pre: list = field(default_factory=list)
    post: list = field(default_factory=list)

    def __len__(self):
        return len(self.pre)


@dataclass
class AdaGradState:
    accumulators: list
    learning_rate: float = 0.005
    epsilon: float = 1e-8

    @classmethod
    def for_params(cls, params, learning_rate=0.005, epsilon=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if epsilon <= 0:
            raise ValueError("epsilon must be positive")
        return cls([np.zeros_like(p) for p in params], learning_rate, epsilon)


def relu(v):
    return np.maximum(v, 0.0)


def _activate(z, activation):
    return relu(z) if activation == RELU else z


def _check_dim(x, expected, what="input"):
    if x.shape[-1] != expected:
        raise ValueError(f"{what} has length {x.shape[-1]}, expected {expected}")


def dense_forward(layer: DenseLayer, x):
    x = np.asarray(x, dtype=np.float64)
    _check_dim(x, layer.in_dim)
    return _activate(x @ layer.weights.T + layer.bias, layer.activation)


def network_forward(layers, x):
    """Run ``x`` through ``layers``; return ``(output, cache)``.

    ``layers`` may be a list of :class:`DenseLayer` or anything with a
    ``layers`` attribute (e.g. a model).
    """
    layers = getattr(layers, "layers", layers)
    h = np.asarray(x, dtype=np.float64)
    _check_dim(h, layers[0].in_dim)
    cache = ForwardCache()
    for layer in layers:
        cache.inputs.append(h)
        z = h @ layer.weights.T + layer.bias
        h = _activate(z, layer.activation)
        cache.pre.append(z)
        cache.post.append(h)
    return h, cache


def mse_loss(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    diff = pred - target
    return float(np.mean(diff * diff))


def mse_grad(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {target.shape}")
    return (2.0 / pred.size) * (pred - target)


def network_backward(layers, cache: ForwardCache, out_grad):
    """Backpropagate ``out_grad`` (dLoss/dOutput) through a cached pass.

    Returns a list of ``(dW, db)`` pairs, one per layer, summed over the
    batch dimension when the forward pass was batched.
    """
    layers = getattr(layers, "layers", layers)
    if len(cache) != len(layers):
        raise ValueError(f"stale cache: depth {len(cache)} for {len(layers)} layers")
    g = np.asarray(out_grad, dtype=np.float64)
    if g.shape != cache.post[-1].shape:
        raise ValueError(
            f"out_grad shape {g.shape} does not match output {cache.post[-1].shape}"
        )
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        layer = layers[i]
        if cache.pre[i].shape[-1] != layer.out_dim:
            raise ValueError(f"stale cache at layer {i}")
        if layer.activation == RELU:
            # subgradient at exactly 0 is 0
            g = g * (cache.pre[i] > 0)
        x = cache.inputs[i]
        if g.ndim == 1:
            dw = np.outer(g, x)
            db = g.copy()
        else:
            dw = g.T @ x
            db = g.sum(axis=0)
        grads[i] = (dw, db)
        if i > 0:
            g = g @ layer.weights
    return grads


def init_weights(in_dim: int, out_dim: int, seed=None, activation=IDENTITY) -> DenseLayer:
    """Uniform ``[-1/sqrt(in_dim), 1/sqrt(in_dim)]`` for weights and bias.

    ``seed`` may be an int or a ``numpy.random.Generator``; weights are drawn
    before the bias.
    """
    if in_dim < 1 or out_dim < 1:
        raise ValueError("layer dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(in_dim)
    weights = rng.uniform(-bound, bound, size=(out_dim, in_dim))
    bias = rng.uniform(-bound, bound, size=out_dim)
    return DenseLayer(weights, bias, activation)


def _adagrad_numpy(param, grad, acc, lr, eps):
    acc += grad * grad
    param -= (lr * grad) / (np.sqrt(acc) + eps)


if numba is not None:

    @numba.njit(cache=True)
    def _adagrad_fused(param, grad, acc, lr, eps):
        p = param.reshape(-1)
        g = grad.reshape(-1)
        a = acc.reshape(-1)
        for i in range(p.size):
            gi = g[i]
            ai = a[i] + gi * gi
            a[i] = ai
            p[i] -= (lr * gi) / (np.sqrt(ai) + eps)

else:  # pragma: no cover
    _adagrad_fused = None


def _apply(param, grad, acc, lr, eps):
    if (
        _adagrad_fused is not None
        and param.flags.c_contiguous
        and grad.flags.c_contiguous
        and acc.flags.c_contiguous
    ):
        _adagrad_fused(param, grad, acc, lr, eps)
    else:
        _adagrad_numpy(param, grad, acc, lr, eps)


def adagrad_step(params, grads, state: AdaGradState):
    """In-place AdaGrad update.

    ``acc += g**2``; ``p -= lr * g / (sqrt(acc) + eps)``. The whole step is
    rejected (nothing modified) if any gradient is non-finite.
    """
    if not (len(params) == len(grads) == len(state.accumulators)):
        raise ValueError("params, grads and accumulators must have equal length")
    for i, (p, g, a) in enumerate(zip(params, grads, state.accumulators)):
        if p.shape != g.shape or p.shape != a.shape:
            raise ValueError(
                f"shape mismatch at tensor {i}: param {p.shape}, "
                f"grad {g.shape}, accumulator {a.shape}"
            )
        if not np.all(np.isfinite(g)):
            bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
            raise NumericalError(f"non-finite gradient in tensor {i} ({bad} entries)")
    lr = float(state.learning_rate)
    eps = float(state.epsilon)
    for p, g, a in zip(params, grads, state.accumulators):
        _apply(p, np.ascontiguousarray(g, dtype=np.float64), a, lr, eps)
    return params, state


def layer_params(layers):
    """Flat list of parameter arrays ``[W0, b0, W1, b1, ...]`` (views)."""
    layers = getattr(layers, "layers", layers)
    out = []
    for layer in layers:
        out.extend((layer.weights, layer.bias))
    return out


def flatten_grads(grads):
    out = []
    for dw, db in grads:
        out.extend((dw, db))
    return out
