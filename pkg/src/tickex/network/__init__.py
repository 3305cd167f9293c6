from .model import (
    DimensionMismatch,
    EmptyDataset,
    FcParams,
    Grads,
    LstmParams,
    NetworkParams,
    NetworkScore,
    backward,
    bce_loss,
    init_network,
    lstm_forward,
    network_forward,
    network_score,
)
from .train import TrainConfig, train
from .baseline import BaselineParams, baseline_forward, baseline_train, init_baseline
from .checkpoint import (
    load_baseline,
    load_manifest,
    load_network,
    save_baseline,
    save_network,
)

__all__ = [
    "DimensionMismatch",
    "EmptyDataset",
    "FcParams",
    "Grads",
    "LstmParams",
    "NetworkParams",
    "NetworkScore",
    "backward",
    "bce_loss",
    "init_network",
    "lstm_forward",
    "network_forward",
    "network_score",
    "TrainConfig",
    "train",
    "BaselineParams",
    "baseline_forward",
    "baseline_train",
    "init_baseline",
    "load_baseline",
    "load_manifest",
    "load_network",
    "save_baseline",
    "save_network",
]
