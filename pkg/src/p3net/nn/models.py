"""PointNet-style encoder and MLP planner (the "Lite" variants)."""
from __future__ import annotations

import numpy as np

from ..errors import DimMismatch, NoForwardState
from .layers import DROPOUT_P, BatchNorm, Linear, bn_relu_infer, dropout_relu, fc_rows
from .mt19937 import Mt19937

ENCODER_WIDTHS = {2: (64, 64, 64, 128, 252), 3: (64, 64, 64, 128, 250)}
# 2D widths follow the published block list; the 3D hidden stack is an
# approximation sized to land near the published parameter total.
PLANNER_WIDTHS = {2: (256, 128, 64, 64, 64), 3: (1024, 768, 512, 384, 256, 128, 64)}
CHUNK = 64


class EncoderModel:
    """Per-point ``FC -> BN -> ReLU`` blocks followed by a max over points."""

    kind = 0

    def __init__(self, dim: int, widths=None, seed: int = 0, dtype=np.float32):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        self.dim = dim
        widths = tuple(widths or ENCODER_WIDTHS[dim])
        rng = np.random.default_rng(seed)
        self.blocks = []
        m = dim
        for n in widths:
            self.blocks.append((Linear(m, n, rng, dtype), BatchNorm(n, dtype)))
            m = n
        self._fwd = None

    @property
    def feature_dim(self) -> int:
        return self.blocks[-1][0].W.shape[1]

    @property
    def dtype(self):
        return self.blocks[0][0].W.dtype

    def parameters(self) -> list:
        out = []
        for fc, bn in self.blocks:
            out += [fc.W, fc.b, bn.gamma, bn.beta]
        return out

    def gradients(self) -> list:
        out = []
        for fc, bn in self.blocks:
            out += [fc.dW, fc.db, bn.dgamma, bn.dbeta]
        return out

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def prepare(self) -> "EncoderModel":
        """Refresh fused BN caches after training or loading."""
        for _, bn in self.blocks:
            bn.refresh_cache()
        return self

    def point_features(self, points: np.ndarray) -> np.ndarray:
        """Inference features ``psi(p)`` for every row of ``points``."""
        x = np.asarray(points, dtype=self.dtype)
        if x.ndim != 2 or x.shape[1] != self.dim:
            raise DimMismatch(f"expected (N, {self.dim}) points, got {x.shape}")
        for fc, bn in self.blocks:
            x = bn_relu_infer(bn, fc_rows(x, fc.W, fc.b))
        return x

    def encode(self, points: np.ndarray, chunk: int = CHUNK) -> np.ndarray:
        """Global feature via a running max, one chunk of points at a time."""
        points = np.asarray(points)
        if points.ndim != 2 or points.shape[1] != self.dim:
            raise DimMismatch(f"expected (N, {self.dim}) points, got {points.shape}")
        phi = np.full(self.feature_dim, -np.inf, dtype=self.dtype)
        for start in range(0, len(points), chunk):
            psi = self.point_features(points[start:start + chunk])
            np.maximum(phi, psi.max(axis=0), out=phi)
        return phi

    def forward_train(self, clouds: list, update_stats: bool = True) -> np.ndarray:
        """Batch-statistics forward over several clouds; returns ``(K, F)`` features.

        BN statistics are taken over the union of all points of all clouds.
        """
        sizes = [len(c) for c in clouds]
        x = np.concatenate([np.asarray(c, dtype=self.dtype) for c in clouds], axis=0)
        if x.shape[1] != self.dim:
            raise DimMismatch(f"expected {self.dim}-D points, got {x.shape[1]}")
        masks = []
        for fc, bn in self.blocks:
            y = bn.forward_train(fc.forward(x), update_stats)
            mask = y > 0
            masks.append(mask)
            x = np.where(mask, y, 0).astype(y.dtype)
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        phi = np.empty((len(clouds), self.feature_dim), dtype=x.dtype)
        arg = np.empty((len(clouds), self.feature_dim), dtype=np.int64)
        for k in range(len(clouds)):
            seg = x[offsets[k]:offsets[k + 1]]
            a = seg.argmax(axis=0)  # ties go to the lowest index
            arg[k] = a + offsets[k]
            phi[k] = seg[a, np.arange(self.feature_dim)]
        self._fwd = (masks, arg, len(x))
        return phi

    def backward(self, dphi: np.ndarray) -> None:
        """Accumulate parameter gradients from ``dL/dphi`` of shape ``(K, F)``."""
        if self._fwd is None:
            raise NoForwardState("EncoderModel.backward called before forward_train")
        masks, arg, total = self._fwd
        dx = np.zeros((total, self.feature_dim), dtype=dphi.dtype)
        cols = np.broadcast_to(np.arange(self.feature_dim), arg.shape)
        np.add.at(dx, (arg.ravel(), cols.ravel()), dphi.ravel())
        for (fc, bn), mask in zip(reversed(self.blocks), reversed(masks)):
            dx = fc.backward(bn.backward(dx * mask))


class PlannerModel:
    """``FC -> ReLU -> Dropout`` blocks and a final linear layer to D coordinates."""

    kind = 1

    def __init__(self, dim: int, feature_dim: int | None = None, widths=None, seed: int = 0,
                 dtype=np.float32):
        if dim not in (2, 3):
            raise ValueError(f"dim must be 2 or 3, got {dim}")
        self.dim = dim
        if feature_dim is None:
            feature_dim = ENCODER_WIDTHS[dim][-1]
        widths = tuple(PLANNER_WIDTHS[dim] if widths is None else widths)
        rng = np.random.default_rng(seed)
        sizes = (feature_dim + 2 * dim,) + widths + (dim,)
        self.layers = [Linear(m, n, rng, dtype) for m, n in zip(sizes[:-1], sizes[1:])]
        self._fwd = None

    @property
    def input_dim(self) -> int:
        return self.layers[0].W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.input_dim - 2 * self.dim

    @property
    def dtype(self):
        return self.layers[0].W.dtype

    def parameters(self) -> list:
        return [p for fc in self.layers for p in (fc.W, fc.b)]

    def gradients(self) -> list:
        return [g for fc in self.layers for g in (fc.dW, fc.db)]

    def n_params(self) -> int:
        return sum(p.size for p in self.parameters())

    def prepare(self) -> "PlannerModel":
        return self

    def assemble(self, phi: np.ndarray, C: np.ndarray, C_goal: np.ndarray) -> np.ndarray:
        C = np.asarray(C)
        C_goal = np.asarray(C_goal)
        phi = np.asarray(phi)
        if C.shape != C_goal.shape or C.ndim != 2 or C.shape[1] != self.dim:
            raise DimMismatch(f"endpoint batches {C.shape} / {C_goal.shape} do not match dim {self.dim}")
        if phi.ndim == 1:
            phi = np.broadcast_to(phi, (len(C), phi.size))
        if phi.shape[1] != self.feature_dim:
            raise DimMismatch(f"feature width {phi.shape[1]} != {self.feature_dim}")
        return np.concatenate([phi, C, C_goal], axis=1).astype(self.dtype)

    def step(self, phi, C, C_goal, rng: Mt19937 | None, mc: bool = True) -> np.ndarray:
        """Next waypoint for every row; dropout stays active when ``mc``."""
        x = self.assemble(phi, C, C_goal)
        for fc in self.layers[:-1]:
            x, _ = dropout_relu(fc_rows(x, fc.W, fc.b), rng, active=mc)
        last = self.layers[-1]
        return fc_rows(x, last.W, last.b)

    def forward_train(self, x: np.ndarray, rng: Mt19937, p: float = DROPOUT_P) -> np.ndarray:
        masks = []
        for fc in self.layers[:-1]:
            x, keep = dropout_relu(fc.forward(x), rng, p, active=p > 0)
            masks.append(keep)
        self._fwd = masks
        return self.layers[-1].forward(x)

    def backward(self, dout: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns ``dL/dinput``."""
        if self._fwd is None:
            raise NoForwardState("PlannerModel.backward called before forward_train")
        dx = self.layers[-1].backward(dout)
        for fc, keep in zip(reversed(self.layers[:-1]), reversed(self._fwd)):
            dx = fc.backward(dx * keep)
        return dx


def encode(model, pc) -> np.ndarray:
    points = getattr(pc, "points", pc)
    return model.encode(points)


def plan_step(model, phi, C, C_goal, rng) -> np.ndarray:
    return model.step(phi, C, C_goal, rng)
