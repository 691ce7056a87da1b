"""Minimal numpy layers with hand-written backward passes.

Every layer caches what its backward pass needs during `forward`, so one
forward must be followed by at most one backward.  Gradients accumulate
into `grads` until `zero_grad` is called.
"""

from __future__ import annotations

import numpy as np


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, bias: bool = True, gain: float = np.sqrt(2.0)):
        scale = gain / np.sqrt(n_in)
        self.params = {"W": rng.normal(0.0, scale, size=(n_in, n_out))}
        if bias:
            self.params["b"] = np.zeros(n_out)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        y = x @ self.params["W"]
        if "b" in self.params:
            y = y + self.params["b"]
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        x2 = x.reshape(-1, x.shape[-1])
        dy2 = dy.reshape(-1, dy.shape[-1])
        self.grads["W"] += x2.T @ dy2
        if "b" in self.params:
            self.grads["b"] += dy2.sum(axis=0)
        return dy @ self.params["W"].T


class ReLU:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0.0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0.0)


class Sequential:
    def __init__(self, *layers):
        self.layers = layers

    def forward(self, x):
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy):
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def linears(self):
        return [layer for layer in self.layers if isinstance(layer, Linear)]


def masked_softmax(scores: np.ndarray, mask: np.ndarray) -> np.ndarray:
    s = np.where(mask, scores, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    e = np.where(mask, np.exp(s), 0.0)
    return e / e.sum(axis=-1, keepdims=True)


class DotProductAttention:
    """Receiver k weights sender l by softmax_l(q_l . key_k / sqrt(m)) over its neighbourhood.

    Shapes: q, key, value are (S, K, m); `mask[s, k, l]` marks l in N_k.
    """

    def forward(self, q, key, value, mask):
        m = q.shape[-1]
        scale = 1.0 / np.sqrt(m)
        scores = np.einsum("skd,sld->skl", key, q) * scale
        alpha = masked_softmax(scores, mask)
        out = np.einsum("skl,sld->skd", alpha, value)
        self._cache = (q, key, value, alpha, scale)
        return out, alpha

    def backward(self, dout):
        q, key, value, alpha, scale = self._cache
        dalpha = np.einsum("skd,sld->skl", dout, value)
        dvalue = np.einsum("skl,skd->sld", alpha, dout)
        dscores = alpha * (dalpha - (alpha * dalpha).sum(axis=-1, keepdims=True))
        dkey = np.einsum("skl,sld->skd", dscores, q) * scale
        dq = np.einsum("skl,skd->sld", dscores, key) * scale
        return dq, dkey, dvalue


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """log-probabilities with -inf on masked entries."""
    z = np.where(mask, logits, -np.inf)
    zmax = z.max(axis=-1, keepdims=True)
    lse = zmax + np.log(np.where(mask, np.exp(z - zmax), 0.0).sum(axis=-1, keepdims=True))
    return np.where(mask, logits - lse, -np.inf)


class Adam:
    def __init__(self, params: list, grads: list, lr: float = 1e-4, betas=(0.9, 0.999), eps: float = 1e-8,
                 max_grad_norm: float | None = 0.5):
        self.params, self.grads = params, grads
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.max_grad_norm = max_grad_norm
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self) -> float:
        norm = float(np.sqrt(sum(float((g * g).sum()) for g in self.grads)))
        clip = 1.0
        if self.max_grad_norm is not None and norm > self.max_grad_norm:
            clip = self.max_grad_norm / (norm + 1e-12)
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(self.params, self.grads, self.m, self.v):
            g = g * clip
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return norm


class RunningMoments:
    """Streaming mean/variance over the leading axis (Chan et al. parallel update)."""

    def __init__(self, shape=()):
        self.n = 0
        self.mean = np.zeros(shape)
        self.m2 = np.zeros(shape)

    def update(self, x) -> None:
        x = np.asarray(x, dtype=float).reshape((-1,) + self.mean.shape)
        if len(x) == 0:
            return
        n_b, mean_b = len(x), x.mean(axis=0)
        m2_b = ((x - mean_b) ** 2).sum(axis=0)
        delta = mean_b - self.mean
        tot = self.n + n_b
        self.mean = self.mean + delta * n_b / tot
        self.m2 = self.m2 + m2_b + delta ** 2 * self.n * n_b / tot
        self.n = tot

    @property
    def std(self):
        if self.n < 2:
            return np.ones_like(self.mean)
        return np.sqrt(self.m2 / self.n)

    def normalize(self, x, clip: float | None = None, eps: float = 1e-8):
        out = (np.asarray(x, dtype=float) - self.mean) / np.maximum(self.std, eps)
        return out if clip is None else np.clip(out, -clip, clip)

    def copy_from(self, other: "RunningMoments") -> None:
        self.n, self.mean, self.m2 = other.n, other.mean.copy(), other.m2.copy()
