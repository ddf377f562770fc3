"""Fixed-point inference: Q8.16 parameters, Q16.16 activations.

Values are held as int64 numpy arrays scaled by ``2**16``. Matrix products
accumulate exact 64-bit sums of Q16.16 x Q8.16 products, then shift right by
16 (arithmetic shift, i.e. truncation toward negative infinity) and saturate
to the 32-bit activation range.
"""
from __future__ import annotations

import numpy as np

from ..errors import DimMismatch, RangeOverflow
from .layers import dropout_relu
from .models import EncoderModel, PlannerModel

FRAC_BITS = 16
ONE = 1 << FRAC_BITS
# (min, max) raw integer codes
Q16_16 = (-(1 << 31), (1 << 31) - 1)
Q8_16 = (-(1 << 23), (1 << 23) - 1)


def quantize(x, fmt=Q8_16, name: str = "value", layer=None) -> np.ndarray:
    """Round-to-nearest into ``fmt``; raises :class:`RangeOverflow` if out of range."""
    x = np.asarray(x, dtype=np.float64)
    q = np.rint(x * ONE)
    lo, hi = fmt
    bad = (q < lo) | (q > hi)
    if bad.any():
        worst = float(x[bad].flat[np.argmax(np.abs(x[bad]))])
        raise RangeOverflow(
            f"{name} in layer {layer}: {worst} outside fixed-point range "
            f"[{lo / ONE}, {hi / ONE}]", layer=layer, parameter=name)
    return q.astype(np.int64)


def saturate(q: np.ndarray, fmt=Q16_16) -> np.ndarray:
    return np.clip(q, fmt[0], fmt[1])


def to_fixed(x) -> np.ndarray:
    """Float activations/inputs to saturated Q16.16."""
    return saturate(np.rint(np.asarray(x, dtype=np.float64) * ONE)).astype(np.int64)


def to_float(q) -> np.ndarray:
    return np.asarray(q, dtype=np.float64) / ONE


def fx_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return saturate((a * b) >> FRAC_BITS)


def fx_linear(x: np.ndarray, W: np.ndarray, b: np.ndarray) -> np.ndarray:
    acc = x @ W  # exact int64 sum of products with 32 fractional bits
    return saturate((acc >> FRAC_BITS) + b)


class FixedEncoder:
    """Q-format mirror of :class:`EncoderModel` inference (fused BN-ReLU)."""

    def __init__(self, model: EncoderModel):
        self.dim = model.dim
        self.blocks = []
        for i, (fc, bn) in enumerate(model.blocks):
            bn.refresh_cache()
            self.blocks.append((
                quantize(fc.W, name="W", layer=i),
                quantize(fc.b, name="b", layer=i),
                quantize(bn.running_mean, name="running_mean", layer=i),
                quantize(bn.fused_scale, name="fused_scale", layer=i),
                quantize(bn.beta, name="beta", layer=i),
            ))
        self.feature_dim = self.blocks[-1][0].shape[1]

    def point_features(self, points) -> np.ndarray:
        x = to_fixed(points)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimMismatch(f"expected (N, {self.dim}) points, got {x.shape}")
        for W, b, mu, s, beta in self.blocks:
            z = fx_linear(x, W, b)
            x = np.maximum(saturate(fx_mul(saturate(z - mu), s) + beta), 0)
        return x

    def encode(self, points, chunk: int = 64) -> np.ndarray:
        """Q16.16 global feature; the running max starts from zeros."""
        points = np.asarray(points)
        phi = np.zeros(self.feature_dim, dtype=np.int64)
        for start in range(0, len(points), chunk):
            np.maximum(phi, self.point_features(points[start:start + chunk]).max(axis=0), out=phi)
        return phi


class FixedPlanner:
    """Q-format mirror of :class:`PlannerModel`; consumes a Q16.16 feature."""

    def __init__(self, model: PlannerModel):
        self.dim = model.dim
        self.layers = [(quantize(fc.W, name="W", layer=i), quantize(fc.b, name="b", layer=i))
                       for i, fc in enumerate(model.layers)]
        self.feature_dim = model.feature_dim

    def step_fixed(self, phi_q, C, C_goal, rng, mc: bool = True) -> np.ndarray:
        """Returns raw Q16.16 outputs."""
        C = to_fixed(C)
        G = to_fixed(C_goal)
        if C.shape != G.shape or C.ndim != 2 or C.shape[1] != self.dim:
            raise DimMismatch(f"endpoint batches {C.shape} / {G.shape} do not match dim {self.dim}")
        phi_q = np.asarray(phi_q, dtype=np.int64)
        if phi_q.size != self.feature_dim:
            raise DimMismatch(f"feature width {phi_q.size} != {self.feature_dim}")
        x = np.concatenate([np.broadcast_to(phi_q, (len(C), phi_q.size)), C, G], axis=1)
        for W, b in self.layers[:-1]:
            x, _ = dropout_relu(fx_linear(x, W, b), rng, active=mc)
        W, b = self.layers[-1]
        return fx_linear(x, W, b)

    def step(self, phi_q, C, C_goal, rng, mc: bool = True) -> np.ndarray:
        return to_float(self.step_fixed(phi_q, C, C_goal, rng, mc))


def quantize_model(model):
    """Fixed-point twin of a float encoder or planner."""
    if isinstance(model, EncoderModel):
        return FixedEncoder(model)
    if isinstance(model, PlannerModel):
        return FixedPlanner(model)
    raise TypeError(f"cannot quantize {type(model).__name__}")
