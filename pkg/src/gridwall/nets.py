"""Minimal dense networks with hand-rolled backprop.

The networks here are small enough (two hidden layers of 64) that plain
numpy is fast, keeps every parameter enumerable as a flat vector, and makes
bit-exact checkpointing and finite-difference gradient checks painless.
Hidden activation is tanh; the output layer is linear.
"""
from __future__ import annotations

import numpy as np

ACTIVATIONS = ("tanh", "linear")


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    return x


def _act_grad(name: str, y: np.ndarray) -> np.ndarray:
    # gradient expressed through the activation output y
    if name == "tanh":
        return 1.0 - y * y
    return np.ones_like(y)


class Mlp:
    """Fully connected net: weights, biases and activation tags per layer."""

    def __init__(
        self,
        sizes: list[int],
        rng: np.random.Generator | None = None,
        zero_final: bool = False,
        dtype=np.float64,
        activations: list[str] | None = None,
    ):
        self.sizes = list(sizes)
        self.dtype = np.dtype(dtype)
        n_layers = len(sizes) - 1
        if activations is None:
            activations = ["tanh"] * (n_layers - 1) + ["linear"]
        if len(activations) != n_layers:
            raise ValueError("one activation tag per layer required")
        for a in activations:
            if a not in ACTIVATIONS:
                raise ValueError(f"unknown activation {a!r}")
        self.activations = list(activations)

        if rng is None:
            rng = np.random.default_rng(0)
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for li, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            limit = np.sqrt(6.0 / (n_in + n_out))
            w = rng.uniform(-limit, limit, size=(n_in, n_out)).astype(self.dtype)
            b = np.zeros(n_out, dtype=self.dtype)
            if zero_final and li == n_layers - 1:
                w[:] = 0.0
            self.weights.append(w)
            self.biases.append(b)

    # ---- forward / backward -------------------------------------------------

    def forward(self, x: np.ndarray) -> np.ndarray:
        h = np.asarray(x, dtype=self.dtype)
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _act(act, h @ w + b)
        return h

    def forward_cache(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Forward pass keeping per-layer outputs for backprop."""
        h = np.asarray(x, dtype=self.dtype)
        cache = [h]
        for w, b, act in zip(self.weights, self.biases, self.activations):
            h = _act(act, h @ w + b)
            cache.append(h)
        return h, cache

    def backward(
        self, cache: list[np.ndarray], dy: np.ndarray
    ) -> tuple[list[np.ndarray], list[np.ndarray], np.ndarray]:
        """Backprop dy (gradient w.r.t. output) through the cached pass.

        Returns (weight grads, bias grads, gradient w.r.t. input).
        """
        dw = [np.zeros_like(w) for w in self.weights]
        db = [np.zeros_like(b) for b in self.biases]
        grad = np.asarray(dy, dtype=self.dtype)
        for li in range(len(self.weights) - 1, -1, -1):
            grad = grad * _act_grad(self.activations[li], cache[li + 1])
            dw[li] = cache[li].T @ grad
            db[li] = grad.sum(axis=0)
            grad = grad @ self.weights[li].T
        return dw, db, grad

    # ---- parameter plumbing --------------------------------------------------

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b.ravel())
        return np.concatenate(parts)

    def set_flat(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=self.dtype)
        if flat.size != self.n_params:
            raise ValueError(f"expected {self.n_params} params, got {flat.size}")
        i = 0
        for w, b in zip(self.weights, self.biases):
            w[...] = flat[i : i + w.size].reshape(w.shape)
            i += w.size
            b[...] = flat[i : i + b.size]
            i += b.size

    def param_arrays(self) -> list[np.ndarray]:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def astype(self, dtype) -> "Mlp":
        """Copy of the network in another dtype (e.g. float64 for checks)."""
        clone = Mlp(self.sizes, zero_final=False, dtype=dtype, activations=self.activations)
        for cw, w in zip(clone.weights, self.weights):
            cw[...] = w.astype(dtype)
        for cb, b in zip(clone.biases, self.biases):
            cb[...] = b.astype(dtype)
        return clone

    def copy(self) -> "Mlp":
        return self.astype(self.dtype)


class Adam:
    """Per-array Adam; operates on the grads lists produced by Mlp.backward."""

    def __init__(self, params: list[np.ndarray], lr: float = 3e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)
