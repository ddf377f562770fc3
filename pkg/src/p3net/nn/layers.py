"""Layer primitives with hand-written forward/backward passes and Adam.

Training code paths use plain BLAS matrix products. Inference code paths use
:func:`fc_rows`, which evaluates each row with its own matrix-vector product
so that a row's result never depends on how many other rows share the batch.
"""
from __future__ import annotations

import numpy as np

from ..errors import InvalidCache, NoForwardState, ShapeMismatch
from .mt19937 import Mt19937

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
DROPOUT_P = 0.5


class Linear:
    """``y = x W + b`` with ``W`` of shape ``(m, n)``."""

    def __init__(self, m: int, n: int, rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng or np.random.default_rng(0)
        bound = 1.0 / np.sqrt(m)
        self.W = rng.uniform(-bound, bound, size=(m, n)).astype(dtype)
        self.b = rng.uniform(-bound, bound, size=n).astype(dtype)
        self.dW = np.zeros_like(self.W)
        self.db = np.zeros_like(self.b)
        self._x = None

    @property
    def shape(self) -> tuple[int, int]:
        return self.W.shape

    def params(self) -> dict:
        return {"W": self.W, "b": self.b}

    def grads(self) -> dict:
        return {"W": self.dW, "b": self.db}

    def forward(self, x: np.ndarray) -> np.ndarray:
        self._x = x
        return fc_forward(self, x)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise NoForwardState("Linear.backward called before forward")
        self.dW[...] = self._x.T @ dy
        self.db[...] = dy.sum(axis=0)
        return dy @ self.W.T


def fc_forward(layer: Linear, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 2 or x.shape[1] != layer.W.shape[0]:
        raise ShapeMismatch(f"input {x.shape} does not match weight {layer.W.shape}")
    return x @ layer.W + layer.b


def fc_rows(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-by-row ``x W + b``; bit-identical per row for any batch size."""
    if x.ndim != 2 or x.shape[1] != W.shape[0]:
        raise ShapeMismatch(f"input {x.shape} does not match weight {W.shape}")
    out = np.empty((x.shape[0], W.shape[1]), dtype=np.result_type(x, W))
    for i in range(x.shape[0]):
        np.matmul(x[i], W, out=out[i])
    out += b
    return out


class BatchNorm:
    def __init__(self, n: int, dtype=np.float32, eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
        self.gamma = np.ones(n, dtype=dtype)
        self.beta = np.zeros(n, dtype=dtype)
        self.running_mean = np.zeros(n, dtype=dtype)
        self.running_var = np.ones(n, dtype=dtype)
        self.eps = eps
        self.momentum = momentum
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self.fused_scale = None
        self._cache_src = None
        self._fwd = None

    @property
    def n(self) -> int:
        return self.gamma.size

    def params(self) -> dict:
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self) -> dict:
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def refresh_cache(self) -> None:
        """Precompute ``s = gamma / sqrt(var + eps)`` for fused inference."""
        self.fused_scale = (self.gamma / np.sqrt(self.running_var + self.eps)).astype(self.gamma.dtype)
        self._cache_src = (self.gamma.copy(), self.running_var.copy())

    def cache_valid(self) -> bool:
        if self.fused_scale is None:
            return False
        g, v = self._cache_src
        return np.array_equal(g, self.gamma) and np.array_equal(v, self.running_var)

    def forward_train(self, z: np.ndarray, update_stats: bool = True) -> np.ndarray:
        """Normalise with batch statistics; returns the affine output (pre-ReLU)."""
        n = z.shape[0]
        mu = z.mean(axis=0)
        var = z.var(axis=0)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (z - mu) * inv_std
        if update_stats:
            unbiased = var * (n / max(n - 1, 1))
            m = self.momentum
            self.running_mean[...] = (1 - m) * self.running_mean + m * mu
            self.running_var[...] = (1 - m) * self.running_var + m * unbiased
        self._fwd = (xhat, inv_std)
        return xhat * self.gamma + self.beta

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._fwd is None:
            raise NoForwardState("BatchNorm.backward called before forward_train")
        xhat, inv_std = self._fwd
        n = dy.shape[0]
        self.dgamma[...] = (dy * xhat).sum(axis=0)
        self.dbeta[...] = dy.sum(axis=0)
        dxhat = dy * self.gamma
        return (inv_std / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))


def bn_relu_infer(layer: BatchNorm, x: np.ndarray) -> np.ndarray:
    """Fused inference ``max(0, (x - mean) * s + beta)``."""
    if not layer.cache_valid():
        raise InvalidCache("fused BN scale is stale; call refresh_cache()")
    y = (x - layer.running_mean) * layer.fused_scale + layer.beta
    return np.maximum(y, 0, out=y)


def dropout_threshold(p: float) -> int:
    return int(np.floor(2.0**32 * p))


def dropout_relu(x: np.ndarray, rng: Mt19937 | None, p: float = DROPOUT_P, active: bool = True):
    """ReLU followed by dropout driven by raw MT19937 words.

    One word per element in row-major order; an element is zeroed when it is
    negative or its word is below ``floor(2**32 * p)``. Surviving values are
    passed through unscaled. Returns ``(y, keep_mask)``.
    """
    if not active:
        keep = x > 0
        return np.where(keep, x, 0).astype(x.dtype, copy=False), keep
    r = rng.words(x.size).reshape(x.shape)
    keep = (x > 0) & (r >= np.uint32(dropout_threshold(p)))
    return np.where(keep, x, 0).astype(x.dtype, copy=False), keep


class Adam:
    def __init__(self, params: list, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list) -> None:
        if len(grads) != len(self.params):
            raise ShapeMismatch("gradient list does not match parameter list")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1 - b1**self.t
        c2 = 1 - b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            if g.shape != p.shape:
                raise ShapeMismatch(f"gradient {g.shape} vs parameter {p.shape}")
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)

    def state(self) -> dict:
        out = {"t": np.array(self.t)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m{i}"] = m
            out[f"v{i}"] = v
        return out

    def load_state(self, state) -> None:
        self.t = int(state["t"])
        for i in range(len(self.params)):
            if state[f"m{i}"].shape != self.params[i].shape:
                raise ShapeMismatch("optimizer state does not match parameters")
            self.m[i][...] = state[f"m{i}"]
            self.v[i][...] = state[f"v{i}"]


def adam_step(params: list, grads: list, state: Adam) -> list:
    """Functional wrapper: advance ``state`` (which owns ``params``) by one step."""
    if any(p is not q for p, q in zip(params, state.params)):
        raise ShapeMismatch("state was built for different parameters")
    state.step(grads)
    return params
