"""End-to-end supervised training of encoder + planner with Adam."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import EmptyDataset
from ..seeding import seed32
from .layers import DROPOUT_P, Adam
from .models import EncoderModel, PlannerModel
from .mt19937 import Mt19937

log = logging.getLogger(__name__)


@dataclass
class TrainingSet:
    """Tuples ``(cloud, c_t, c_goal, c_next)``; clouds are shared by index."""

    clouds: list
    cloud_index: np.ndarray
    current: np.ndarray
    goal: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        self.cloud_index = np.asarray(self.cloud_index, dtype=np.int64)
        self.current = np.asarray(self.current, dtype=np.float64)
        self.goal = np.asarray(self.goal, dtype=np.float64)
        self.target = np.asarray(self.target, dtype=np.float64)

    def __len__(self):
        return len(self.cloud_index)


@dataclass
class TrainResult:
    loss_curve: list = field(default_factory=list)
    optimizer: Adam | None = None


def loss_and_grads(encoder: EncoderModel, planner: PlannerModel, data: TrainingSet, idx,
                   rng: Mt19937, update_stats: bool = True, dropout: float = DROPOUT_P) -> float:
    """Forward + backward on the samples ``idx``; gradients land in the layers.

    Loss is the batch mean of the squared Euclidean error.
    """
    idx = np.asarray(idx)
    uniq, inv = np.unique(data.cloud_index[idx], return_inverse=True)
    phi = encoder.forward_train([data.clouds[u] for u in uniq], update_stats)
    dt = planner.dtype
    x = np.concatenate([phi[inv], data.current[idx].astype(dt), data.goal[idx].astype(dt)], axis=1)
    out = planner.forward_train(x, rng, dropout)
    diff = out - data.target[idx].astype(dt)
    loss = float(np.mean(np.sum(diff.astype(np.float64) ** 2, axis=1)))
    dx = planner.backward((2.0 / len(idx)) * diff)
    f = encoder.feature_dim
    dphi = np.zeros((len(uniq), f), dtype=dx.dtype)
    np.add.at(dphi, inv, dx[:, :f])
    encoder.backward(dphi)
    return loss


def make_optimizer(encoder, planner, lr: float = 1e-3) -> Adam:
    return Adam(encoder.parameters() + planner.parameters(), lr=lr, beta1=0.9, beta2=0.999)


def train(encoder: EncoderModel, planner: PlannerModel, data: TrainingSet, epochs: int = 50,
          batch_size: int = 128, seed: int = 0, lr: float = 1e-3, start_epoch: int = 0,
          optimizer: Adam | None = None, on_epoch=None, dropout: float = DROPOUT_P) -> TrainResult:
    """Train both models in place.

    Each epoch draws its shuffle order and its dropout stream from
    ``(seed, epoch)`` alone, so a run resumed from a saved epoch boundary
    (weights + optimizer state) continues exactly as the uninterrupted run.
    ``dropout=0`` turns dropout off (useful for sanity checks only: inference
    always samples with p = 0.5).
    """
    if len(data) == 0:
        raise EmptyDataset("no training tuples")
    opt = optimizer or make_optimizer(encoder, planner, lr)
    grads = encoder.gradients() + planner.gradients()
    result = TrainResult(optimizer=opt)
    n = len(data)
    for epoch in range(start_epoch, start_epoch + epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        mt = Mt19937(seed32(seed, epoch))
        total = 0.0
        for s in range(0, n, batch_size):
            idx = order[s:s + batch_size]
            loss = loss_and_grads(encoder, planner, data, idx, mt, dropout=dropout)
            opt.step(grads)
            total += loss * len(idx)
        mean = total / n
        result.loss_curve.append(mean)
        log.info("epoch %d loss %.6f", epoch, mean)
        if on_epoch is not None:
            on_epoch(epoch, mean)
    encoder.prepare()
    planner.prepare()
    return result
