"""``P3NM`` model checkpoints (little-endian, binary32 parameters).

Layout: magic, version u32, model kind u8 (0 encoder / 1 planner), dim u8,
layer count u16, then per layer: layer kind u8 (0 linear / 1 batch norm),
m u32, n u32 and the raw parameter blocks (``W`` row-major then ``b`` for
linear; ``gamma, beta, running_mean, running_var`` for batch norm, m = n).
"""
from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .layers import BatchNorm, Linear
from .models import EncoderModel, PlannerModel

MAGIC = b"P3NM"
VERSION = 1
LINEAR, BATCHNORM = 0, 1

_HEAD = struct.Struct("<4sIBBH")
_LAYER = struct.Struct("<BII")


def _layers_of(model):
    if isinstance(model, EncoderModel):
        for fc, bn in model.blocks:
            yield fc
            yield bn
    else:
        yield from model.layers


def dumps(model) -> bytes:
    layers = list(_layers_of(model))
    buf = io.BytesIO()
    buf.write(_HEAD.pack(MAGIC, VERSION, model.kind, model.dim, len(layers)))
    for layer in layers:
        if isinstance(layer, Linear):
            m, n = layer.W.shape
            buf.write(_LAYER.pack(LINEAR, m, n))
            blocks = (layer.W, layer.b)
        else:
            buf.write(_LAYER.pack(BATCHNORM, layer.n, layer.n))
            blocks = (layer.gamma, layer.beta, layer.running_mean, layer.running_var)
        for arr in blocks:
            buf.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return buf.getvalue()


def save_model(model, path) -> None:
    Path(path).write_bytes(dumps(model))


class _Reader:
    def __init__(self, data: bytes, name: str):
        self.data, self.pos, self.name = data, 0, name

    def unpack(self, st: struct.Struct):
        if self.pos + st.size > len(self.data):
            raise FormatError(f"{self.name}: truncated")
        out = st.unpack_from(self.data, self.pos)
        self.pos += st.size
        return out

    def floats(self, *shape) -> np.ndarray:
        count = int(np.prod(shape))
        if self.pos + 4 * count > len(self.data):
            raise FormatError(f"{self.name}: truncated parameter block")
        arr = np.frombuffer(self.data, dtype="<f4", count=count, offset=self.pos)
        self.pos += 4 * count
        return arr.reshape(shape).astype(np.float32)


def loads(data: bytes, name: str = "<checkpoint>"):
    r = _Reader(data, name)
    magic, version, kind, dim, count = r.unpack(_HEAD)
    if magic != MAGIC:
        raise FormatError(f"{name}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{name}: unsupported version {version}")
    if kind not in (0, 1) or dim not in (2, 3):
        raise FormatError(f"{name}: bad model kind {kind} / dim {dim}")
    layers = []
    for _ in range(count):
        lk, m, n = r.unpack(_LAYER)
        if lk == LINEAR:
            fc = Linear.__new__(Linear)
            fc.W = r.floats(m, n)
            fc.b = r.floats(n)
            fc.dW, fc.db, fc._x = np.zeros_like(fc.W), np.zeros_like(fc.b), None
            layers.append(fc)
        elif lk == BATCHNORM:
            if m != n:
                raise FormatError(f"{name}: batch norm with m != n")
            bn = BatchNorm(n)
            bn.gamma, bn.beta, bn.running_mean, bn.running_var = (r.floats(n) for _ in range(4))
            bn.dgamma, bn.dbeta = np.zeros_like(bn.gamma), np.zeros_like(bn.beta)
            layers.append(bn)
        else:
            raise FormatError(f"{name}: unknown layer kind {lk}")
    if r.pos != len(data):
        raise FormatError(f"{name}: {len(data) - r.pos} trailing bytes")

    if kind == 0:
        if len(layers) % 2 or not all(
                isinstance(a, Linear) and isinstance(b, BatchNorm) for a, b in zip(layers[::2], layers[1::2])):
            raise FormatError(f"{name}: encoder layers must alternate linear / batch norm")
        model = EncoderModel.__new__(EncoderModel)
        model.dim = dim
        model.blocks = list(zip(layers[::2], layers[1::2]))
        model._fwd = None
    else:
        if not layers or not all(isinstance(a, Linear) for a in layers):
            raise FormatError(f"{name}: planner must contain only linear layers")
        model = PlannerModel.__new__(PlannerModel)
        model.dim = dim
        model.layers = layers
        model._fwd = None
    return model.prepare()


def load_model(path):
    return loads(Path(path).read_bytes(), str(path))
