"""Two-layer fully connected comparison model over bag-of-n-gram features.

Input is the document-level feature vector concatenated with the hashed
token/entity n-grams of the candidate's section. Same loss, optimizer, and
seeding discipline as the LSTM network; what it lacks is any view of
character adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DimensionMismatch, EmptyDataset, Grads, clamp_prediction, sigmoid
from .train import Adam, EpochStats, TrainConfig

DEFAULT_BASELINE_HIDDEN = 64


@dataclass
class BaselineParams:
    w1: np.ndarray  # (hidden, in)
    b1: np.ndarray
    w2: np.ndarray  # (1, hidden)
    b2: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}

    def copy(self) -> "BaselineParams":
        return BaselineParams(self.w1.copy(), self.b1.copy(), self.w2.copy(), self.b2.copy())


def init_baseline(input_dim: int, hidden_dim: int = DEFAULT_BASELINE_HIDDEN,
                  seed: int = 0, init_scale: float = 0.08) -> BaselineParams:
    rng = np.random.default_rng([seed, 13])
    return BaselineParams(
        w1=rng.uniform(-init_scale, init_scale, size=(hidden_dim, input_dim)),
        b1=np.zeros(hidden_dim),
        w2=rng.uniform(-init_scale, init_scale, size=(1, hidden_dim)),
        b2=np.zeros(1),
    )


def baseline_forward(params: BaselineParams, features: np.ndarray) -> np.ndarray:
    """Clamped correctness estimates for a (B, in) feature matrix."""
    if features.ndim != 2 or features.shape[1] != params.input_dim:
        raise DimensionMismatch(
            f"expected (B, {params.input_dim}) features, got {features.shape}")
    hidden = np.maximum(features @ params.w1.T + params.b1, 0.0)
    z = (hidden @ params.w2.T + params.b2)[:, 0]
    return clamp_prediction(sigmoid(z))


def _forward_cache(params: BaselineParams, features: np.ndarray):
    pre = features @ params.w1.T + params.b1
    hidden = np.maximum(pre, 0.0)
    z = (hidden @ params.w2.T + params.b2)[:, 0]
    return pre, hidden, z, sigmoid(z)


def _backward(params: BaselineParams, features, pre, hidden, y_tilde, labels) -> Grads:
    batch = labels.shape[0]
    dz = (y_tilde - labels) / batch
    dw2 = dz[None, :] @ hidden
    db2 = np.array([dz.sum()])
    dhidden = dz[:, None] @ params.w2
    dpre = dhidden * (pre > 0.0)
    dw1 = dpre.T @ features
    db1 = dpre.sum(axis=0)
    return {"w1": dw1, "b1": db1, "w2": dw2, "b2": db2}


def baseline_train(
    features: np.ndarray,
    labels: np.ndarray,
    cfg: TrainConfig,
    hidden_dim: int = DEFAULT_BASELINE_HIDDEN,
) -> tuple[BaselineParams, list[EpochStats]]:
    """Same loop as the network trainer: Adam, clipping, seeded shuffles."""
    cfg.validate()
    n = features.shape[0]
    if n == 0:
        raise EmptyDataset("baseline training set is empty")
    labels = np.asarray(labels, dtype=np.float64)
    features = np.asarray(features, dtype=np.float64)

    params = init_baseline(features.shape[1], hidden_dim, cfg.seed, cfg.init_scale)
    rng = np.random.default_rng([cfg.seed, 23])
    order = rng.permutation(n)
    n_val = int(n * cfg.validation_fraction)
    val_idx = order[:n_val]
    train_idx = order[n_val:]
    if train_idx.size == 0:
        raise EmptyDataset("validation split consumed every record")

    optimizer = Adam(params.tensors(), cfg)
    history: list[EpochStats] = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(train_idx.size)
        running = 0.0
        for start in range(0, train_idx.size, cfg.batch_size):
            idx = train_idx[perm[start : start + cfg.batch_size]]
            batch_x = features[idx]
            batch_y = labels[idx]
            pre, hidden, z, y_tilde = _forward_cache(params, batch_x)
            running += float(np.mean(np.logaddexp(0.0, z) - batch_y * z)) * idx.size
            optimizer.step(_backward(params, batch_x, pre, hidden, y_tilde, batch_y))
        train_loss = running / train_idx.size
        val_loss = None
        if val_idx.size:
            _, _, z_val, _ = _forward_cache(params, features[val_idx])
            val_loss = float(np.mean(np.logaddexp(0.0, z_val) - labels[val_idx] * z_val))
        history.append(EpochStats(epoch=epoch, train_loss=train_loss, val_loss=val_loss))
    return params, history
