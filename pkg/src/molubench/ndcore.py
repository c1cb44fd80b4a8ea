"""Minimal dense neural-network engine.

Matrices are plain 2-D float64 numpy arrays, batches are row-major
(batch dimension = rows). Layers carry hand-written reverse-mode
gradients; there is no autograd graph. Forward/backward/metric
operations are pure; optimizer steps mutate the parameter arrays and
the optimizer state in place and must be serialized per model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .actfn import ActivationSpec, activation_derivative, activation_value
from .datasets import SeededPrng

# The engine's universal tensor: a dense 2-D float64 array.
Matrix = np.ndarray


def _as_matrix(x) -> np.ndarray:
    m = np.asarray(x, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


@dataclass
class DenseLayer:
    """Fully connected layer y = act(x W^T + b).

    weights has shape (out, in); activation None means identity.
    """

    weights: np.ndarray
    bias: np.ndarray
    activation: ActivationSpec | None = None

    def __post_init__(self):
        self.weights = _as_matrix(self.weights)
        self.bias = np.asarray(self.bias, dtype=np.float64).ravel()
        if self.bias.size != self.weights.shape[0]:
            raise ValueError(
                f"bias length {self.bias.size} != output dim {self.weights.shape[0]}"
            )


@dataclass
class Mlp:
    """A stack of dense layers; adjacent dimensions must chain."""

    layers: list[DenseLayer] = field(default_factory=list)

    def __post_init__(self):
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.weights.shape[0] != nxt.weights.shape[1]:
                raise ValueError(
                    f"layer output dim {prev.weights.shape[0]} does not feed "
                    f"layer input dim {nxt.weights.shape[1]}"
                )

    @property
    def dims(self) -> list[int]:
        return [self.layers[0].weights.shape[1]] + [l.weights.shape[0] for l in self.layers]

    def parameters(self) -> list[np.ndarray]:
        """Flat parameter list [W1, b1, W2, b2, ...] (live views)."""
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.bias)
        return out


def matmul(a, b) -> np.ndarray:
    a = _as_matrix(a)
    b = _as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def dense_forward(layer: DenseLayer, x_batch) -> tuple[np.ndarray, tuple]:
    """Apply the layer to a batch; cache holds what backward needs."""
    x = _as_matrix(x_batch)
    if x.shape[1] != layer.weights.shape[1]:
        raise ValueError(
            f"input dim {x.shape[1]} != layer input dim {layer.weights.shape[1]}"
        )
    z = x @ layer.weights.T + layer.bias
    y = z if layer.activation is None else activation_value(layer.activation, z)
    return y, (x, z)


def dense_backward(layer: DenseLayer, cache, dy) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reverse-mode gradients for one layer.

    Returns (dx, dW, db) for upstream gradient dy of the layer output.
    """
    x, z = cache
    dy = _as_matrix(dy)
    if dy.shape != z.shape:
        raise ValueError(f"dy shape {dy.shape} != output shape {z.shape}")
    dz = dy if layer.activation is None else dy * activation_derivative(layer.activation, z)
    dW = dz.T @ x
    db = dz.sum(axis=0)
    dx = dz @ layer.weights
    return dx, dW, db


def mlp_forward(model: Mlp, x_batch) -> tuple[np.ndarray, list]:
    y = _as_matrix(x_batch)
    caches = []
    for layer in model.layers:
        y, cache = dense_forward(layer, y)
        caches.append(cache)
    return y, caches


def mlp_backward(model: Mlp, caches, dy) -> tuple[np.ndarray, list[np.ndarray]]:
    """Backpropagate dy through the whole stack.

    Returns (dx, grads) with grads ordered like Mlp.parameters().
    """
    grads: list[np.ndarray] = []
    dx = dy
    for layer, cache in zip(reversed(model.layers), reversed(caches)):
        dx, dW, db = dense_backward(layer, cache, dx)
        grads.append(db)
        grads.append(dW)
    grads.reverse()
    return dx, grads


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean over all entries of squared error; grad wrt pred."""
    p = _as_matrix(pred)
    t = _as_matrix(target)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    diff = p - t
    loss = float(np.mean(diff * diff))
    return loss, 2.0 * diff / diff.size


def softmax_cross_entropy(logits, labels) -> tuple[float, np.ndarray]:
    """Mean negative log-softmax of the true class; grad wrt logits.

    Stabilized by max subtraction; per-row gradients sum to zero.
    """
    z = _as_matrix(logits)
    y = np.asarray(labels, dtype=np.int64).ravel()
    n, n_classes = z.shape
    if y.size != n:
        raise ValueError(f"{y.size} labels for {n} rows")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        raise ValueError(f"label out of range [0, {n_classes})")
    shifted = z - z.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    total = exp.sum(axis=1, keepdims=True)
    log_p = shifted - np.log(total)
    loss = float(-np.mean(log_p[np.arange(n), y]))
    grad = exp / total
    grad[np.arange(n), y] -= 1.0
    return loss, grad / n


def topk_accuracy(logits, labels, k: int) -> float:
    """Fraction of rows whose label is among the k largest logits.

    Ties are broken in favor of the lower class index.
    """
    z = _as_matrix(logits)
    y = np.asarray(labels, dtype=np.int64).ravel()
    n, n_classes = z.shape
    if not 1 <= k <= n_classes:
        raise ValueError(f"k={k} out of range [1, {n_classes}]")
    if y.size != n:
        raise ValueError(f"{y.size} labels for {n} rows")
    # stable sort on -logits: equal scores keep ascending class order
    top = np.argsort(-z, axis=1, kind="stable")[:, :k]
    return float(np.mean((top == y[:, None]).any(axis=1)))


@dataclass
class OptimizerState:
    """State for sgd_momentum_step / adam_step.

    Buffers are allocated lazily on the first step and afterwards must
    mirror the parameter shapes; step_count increments by exactly 1 per
    step.
    """

    kind: str
    learning_rate: float
    momentum: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    velocity: list[np.ndarray] | None = None
    m: list[np.ndarray] | None = None
    v: list[np.ndarray] | None = None
    step_count: int = 0

    def __post_init__(self):
        if self.kind not in ("sgd_momentum", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")

    @classmethod
    def sgd_momentum(cls, learning_rate: float, momentum: float = 0.0) -> "OptimizerState":
        return cls("sgd_momentum", learning_rate, momentum=momentum)

    @classmethod
    def adam(cls, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
             epsilon: float = 1e-8) -> "OptimizerState":
        return cls("adam", learning_rate, beta1=beta1, beta2=beta2, epsilon=epsilon)


def _check_like(buffers: list[np.ndarray], params: list[np.ndarray], what: str):
    if len(buffers) != len(params):
        raise ValueError(f"{what}: {len(buffers)} buffers for {len(params)} parameters")
    for b, p in zip(buffers, params):
        if b.shape != p.shape:
            raise ValueError(f"{what}: buffer shape {b.shape} != parameter shape {p.shape}")


def sgd_momentum_step(params: list[np.ndarray], grads: list[np.ndarray],
                      state: OptimizerState) -> None:
    """v <- mu*v + g; p <- p - lr*v. Mutates params and state in place.

    Velocity accumulates raw gradients (not pre-multiplied by the
    learning rate).
    """
    if state.kind != "sgd_momentum":
        raise ValueError(f"state kind {state.kind!r} is not sgd_momentum")
    _check_like(grads, params, "grads")
    if state.velocity is None:
        state.velocity = [np.zeros_like(p) for p in params]
    _check_like(state.velocity, params, "velocity")
    for p, g, v in zip(params, grads, state.velocity):
        v *= state.momentum
        v += g
        p -= state.learning_rate * v
    state.step_count += 1


def adam_step(params: list[np.ndarray], grads: list[np.ndarray],
              state: OptimizerState) -> None:
    """Adam with bias correction. Mutates params and state in place."""
    if state.kind != "adam":
        raise ValueError(f"state kind {state.kind!r} is not adam")
    _check_like(grads, params, "grads")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    _check_like(state.m, params, "m")
    _check_like(state.v, params, "v")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)


def init_mlp(dims, activation: ActivationSpec, seed: int) -> Mlp:
    """Build an Mlp with uniform +-sqrt(6/fan_in) weights and zero biases.

    Hidden layers share `activation`; the final layer is identity.
    Weights are drawn row-major, layer by layer, from SeededPrng(seed),
    so the same seed always gives bit-identical parameters.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2:
        raise ValueError(f"need at least input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all dims must be >= 1, got {dims}")
    prng = SeededPrng(seed)
    layers = []
    for i, (fan_in, fan_out) in enumerate(zip(dims, dims[1:])):
        lim = math.sqrt(6.0 / fan_in)
        w = np.array(
            [prng.uniform(-lim, lim) for _ in range(fan_out * fan_in)],
            dtype=np.float64,
        ).reshape(fan_out, fan_in)
        act = activation if i < len(dims) - 2 else None
        layers.append(DenseLayer(w, np.zeros(fan_out), act))
    return Mlp(layers)
