"""Small dense networks with hand-written gradients, Adam, and a gradient checker.

Everything here works on float64 numpy arrays. A layer weight has shape
``(fan_in, fan_out)`` so a forward pass is ``X @ W + b``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("identity", "relu", "sigmoid")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_sigmoid(z):
    """Stable log(sigmoid(z))."""
    z = np.asarray(z, dtype=float)
    return -np.logaddexp(0.0, -z)


def bce_with_logits(z, target):
    """Mean binary cross-entropy of sigmoid(z) against ``target``, and dL/dz."""
    z = np.asarray(z, dtype=float)
    target = np.asarray(target, dtype=float)
    loss = -(target * log_sigmoid(z) + (1.0 - target) * log_sigmoid(-z))
    grad = (sigmoid(z) - target) / z.size
    return float(loss.mean()), grad


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.W.ndim != 2 or self.b.shape[0] != self.W.shape[1]:
            raise ValueError(f"layer shape mismatch: W {self.W.shape}, b {self.b.shape}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class DenseNet:
    layers: list[Layer] = field(default_factory=list)

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a DenseNet needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if prev.W.shape[1] != nxt.W.shape[0]:
                raise ValueError(
                    f"layer widths do not chain: {prev.W.shape} -> {nxt.W.shape}")

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].W.shape[1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...), by reference."""
        out = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    def set_params(self, params) -> None:
        for i, layer in enumerate(self.layers):
            layer.W = np.array(params[2 * i], dtype=float)
            layer.b = np.array(params[2 * i + 1], dtype=float)

    def copy(self) -> "DenseNet":
        return DenseNet([Layer(l.W.copy(), l.b.copy(), l.activation) for l in self.layers])

    def to_dict(self) -> dict:
        return {"layers": [
            {"shape": list(l.W.shape), "W": l.W.ravel().tolist(),
             "b": l.b.tolist(), "activation": l.activation}
            for l in self.layers]}

    @classmethod
    def from_dict(cls, d: dict) -> "DenseNet":
        return cls([Layer(np.array(l["W"], dtype=float).reshape(l["shape"]),
                          np.array(l["b"], dtype=float), l["activation"])
                    for l in d["layers"]])


def init_dense(sizes, activations, rng) -> DenseNet:
    """Glorot-uniform weights, zero biases.

    ``sizes`` lists the widths including input, e.g. ``[1, 32, 1]``.
    """
    if len(activations) != len(sizes) - 1:
        raise ValueError("need one activation per layer")
    layers = []
    for fan_in, fan_out, act in zip(sizes[:-1], sizes[1:], activations):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers.append(Layer(rng.uniform(-limit, limit, size=(fan_in, fan_out)),
                            np.zeros(fan_out), act))
    return DenseNet(layers)


def _activate(z, activation):
    if activation == "identity":
        return z
    if activation == "relu":
        return np.maximum(z, 0.0)
    return sigmoid(z)


def forward(net: DenseNet, X):
    """Run ``X`` through the net. Returns the output and a cache for :func:`backward`."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != net.input_dim:
        raise ValueError(f"dimension mismatch: input {X.shape}, net expects {net.input_dim} columns")
    cache = {"inputs": [], "pre": [], "post": [], "shapes": [l.W.shape for l in net.layers]}
    h = X
    for layer in net.layers:
        cache["inputs"].append(h)
        z = h @ layer.W + layer.b
        h = _activate(z, layer.activation)
        cache["pre"].append(z)
        cache["post"].append(h)
    return h, cache


def backward(net: DenseNet, cache, upstream):
    """Backpropagate ``upstream`` = dLoss/dOutput.

    Returns ``(grads, dX)`` where ``grads`` matches ``net.params()`` order.
    """
    if cache["shapes"] != [l.W.shape for l in net.layers]:
        raise ValueError("stale cache: network shapes changed since forward")
    delta = np.asarray(upstream, dtype=float)
    if delta.shape != cache["post"][-1].shape:
        raise ValueError(f"upstream shape {delta.shape} does not match output {cache['post'][-1].shape}")
    grads = [None] * (2 * len(net.layers))
    for i in reversed(range(len(net.layers))):
        layer = net.layers[i]
        if layer.activation == "relu":
            delta = delta * (cache["pre"][i] > 0)
        elif layer.activation == "sigmoid":
            o = cache["post"][i]
            delta = delta * o * (1.0 - o)
        grads[2 * i] = cache["inputs"][i].T @ delta
        grads[2 * i + 1] = delta.sum(axis=0)
        delta = delta @ layer.W.T
    return grads, delta


@dataclass
class AdamState:
    learning_rate: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: list = None
    v: list = None


def adam_step(state: AdamState, params, grads):
    """One bias-corrected Adam update, applied in place to ``params``."""
    if len(params) != len(grads):
        raise ValueError("params and grads differ in length")
    for p, g in zip(params, grads):
        if np.shape(p) != np.shape(g):
            raise ValueError(f"shape mismatch {np.shape(p)} vs {np.shape(g)}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
    if state.m is None:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.learning_rate * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params, state


def sgd_step(learning_rate, params, grads):
    for p, g in zip(params, grads):
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient")
        p -= learning_rate * g
    return params


def make_optimizer(kind: str, learning_rate: float):
    """Return ``step(params, grads)`` closing over its own state."""
    if kind == "adam":
        state = AdamState(learning_rate=learning_rate)
        return lambda params, grads: adam_step(state, params, grads)
    if kind == "sgd":
        return lambda params, grads: sgd_step(learning_rate, params, grads)
    raise ValueError(f"unknown optimizer {kind!r}")


def grad_check(loss_fn, params, analytic, step=1e-5):
    """Largest relative gap between ``analytic`` and central differences.

    ``loss_fn`` takes the list ``params`` (which is perturbed in place and
    restored) and returns a float. The gap per coordinate is
    ``|a - fd| / (|a| + |fd| + 1e-12)``.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.reshape(-1)
        a = np.asarray(a, dtype=float).reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + step
            up = loss_fn(params)
            flat[j] = orig - step
            down = loss_fn(params)
            flat[j] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise FloatingPointError("non-finite loss during gradient check")
            fd = (up - down) / (2 * step)
            worst = max(worst, abs(a[j] - fd) / (abs(a[j]) + abs(fd) + 1e-12))
    return worst


def save_json(obj: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1)
