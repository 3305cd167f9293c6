"""Seeded, single-threaded training loop shared by the network and baseline.

Adam with global-norm gradient clipping; per-epoch shuffles derive from the
config seed, so a run reproduces its loss history bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoder import EncodedCandidate
from .model import (
    EmptyDataset,
    Grads,
    NetworkParams,
    backward_batch,
    batch_loss,
    forward_batch,
    pack_batch,
)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 32
    epochs: int = 8
    seed: int = 0
    clip_norm: float = 5.0
    validation_fraction: float = 0.1
    init_scale: float = 0.08
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def validate(self) -> None:
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation fraction must lie in [0, 1)")


class Adam:
    """Adam over a named tensor dict, updating the tensors in place."""

    def __init__(self, tensors: dict[str, np.ndarray], cfg: TrainConfig):
        self.tensors = tensors
        self.cfg = cfg
        self.step_count = 0
        self.m = {k: np.zeros_like(v) for k, v in tensors.items()}
        self.v = {k: np.zeros_like(v) for k, v in tensors.items()}

    def step(self, grads: Grads) -> None:
        cfg = self.cfg
        clipped = clip_gradients(grads, cfg.clip_norm)
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - cfg.beta1**t
        bias2 = 1.0 - cfg.beta2**t
        for key, tensor in self.tensors.items():
            g = clipped[key]
            self.m[key] = cfg.beta1 * self.m[key] + (1.0 - cfg.beta1) * g
            self.v[key] = cfg.beta2 * self.v[key] + (1.0 - cfg.beta2) * (g * g)
            m_hat = self.m[key] / bias1
            v_hat = self.v[key] / bias2
            tensor -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)


def clip_gradients(grads: Grads, clip_norm: float) -> Grads:
    total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if clip_norm <= 0 or total <= clip_norm:
        return grads
    scale = clip_norm / total
    return {k: g * scale for k, g in grads.items()}


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float | None


def _evaluate_loss(params: NetworkParams, records: list[EncodedCandidate],
                   batch_size: int) -> float:
    total = 0.0
    for start in range(0, len(records), batch_size):
        chunk = records[start : start + batch_size]
        labels = np.array([r.label for r in chunk], dtype=np.float64)
        x, lengths, gmat = pack_batch(chunk, params.char_dim)
        cache = forward_batch(params, x, lengths, gmat)
        total += batch_loss(cache, labels) * len(chunk)
    return total / len(records)


def train(
    params: NetworkParams,
    dataset: list[EncodedCandidate],
    cfg: TrainConfig,
) -> tuple[NetworkParams, list[EpochStats]]:
    """Train a copy of ``params`` on labeled encodings; returns loss history."""
    cfg.validate()
    if not dataset:
        raise EmptyDataset("training dataset is empty")
    if any(rec.label is None for rec in dataset):
        raise ValueError("all training records need labels")

    params = params.copy()
    rng = np.random.default_rng([cfg.seed, 23])
    order = rng.permutation(len(dataset))
    n_val = int(len(dataset) * cfg.validation_fraction)
    val_set = [dataset[i] for i in order[:n_val]]
    train_set = [dataset[i] for i in order[n_val:]]
    if not train_set:
        raise EmptyDataset("validation split consumed every record")

    optimizer = Adam(params.tensors(), cfg)
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_set))
        running = 0.0
        for start in range(0, len(train_set), cfg.batch_size):
            chunk = [train_set[i] for i in perm[start : start + cfg.batch_size]]
            labels = np.array([r.label for r in chunk], dtype=np.float64)
            x, lengths, gmat = pack_batch(chunk, params.char_dim)
            cache = forward_batch(params, x, lengths, gmat)
            running += batch_loss(cache, labels) * len(chunk)
            grads = backward_batch(params, cache, labels)
            optimizer.step(grads)
        train_loss = running / len(train_set)
        val_loss = _evaluate_loss(params, val_set, cfg.batch_size) if val_set else None
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
    return params, history
