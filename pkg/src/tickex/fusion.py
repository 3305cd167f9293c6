"""Stage 4: linear accept/reject classifier over both correctness scores.

Features are the (standardized) consistency score, the network score, a
missing-consistency indicator, the normalized symbol-value distance, and a
relation-kind flag. Fit by full-batch gradient descent on L2-regularized
binary cross-entropy against held-out consistency labels; the standardization
constants are frozen into the saved parameters so inference never depends on
inference-batch statistics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .network.model import EmptyDataset
from .parser import ExtractionCandidate, RelationKind, span_distance
from .tsdb import ConsistencyScore

FEATURE_NAMES = ("s", "s_tilde", "s_missing", "pair_distance", "kind_is_rel")

DEFAULT_THRESHOLD = 0.5
DEFAULT_FUSION_LEARNING_RATE = 0.5
DEFAULT_FUSION_EPOCHS = 400
DEFAULT_FUSION_L2 = 1e-3


@dataclass(frozen=True)
class FusionFeatures:
    s: float  # standardized; 0 when missing
    s_tilde: float
    s_missing: float
    pair_distance: float
    kind_is_rel: float

    def vector(self) -> np.ndarray:
        return np.array([self.s, self.s_tilde, self.s_missing,
                         self.pair_distance, self.kind_is_rel])


@dataclass(frozen=True)
class FusionDecision:
    accept: bool
    p: float


@dataclass
class FusionParams:
    weights: np.ndarray  # one per FEATURE_NAMES entry
    bias: float
    threshold: float
    s_mean: float
    s_std: float
    final_loss: float = math.nan

    def save_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({
            "feature_names": list(FEATURE_NAMES),
            "weights": [float(w) for w in self.weights],
            "bias": float(self.bias),
            "threshold": float(self.threshold),
            "s_mean": float(self.s_mean),
            "s_std": float(self.s_std),
            "final_loss": float(self.final_loss),
        }, indent=2) + "\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "FusionParams":
        row = json.loads(Path(path).read_text())
        if row["feature_names"] != list(FEATURE_NAMES):
            raise ValueError(f"unexpected fusion feature order: {row['feature_names']}")
        return cls(
            weights=np.array(row["weights"], dtype=np.float64),
            bias=row["bias"],
            threshold=row["threshold"],
            s_mean=row["s_mean"],
            s_std=row["s_std"],
            final_loss=row.get("final_loss", math.nan),
        )


def raw_features(
    candidate: ExtractionCandidate,
    score: ConsistencyScore | None,
    s_tilde: float,
    max_pair_distance: int,
) -> FusionFeatures:
    """Feature assembly before standardization (raw s, or 0 plus indicator)."""
    missing = score is None
    return FusionFeatures(
        s=0.0 if missing else score.s,
        s_tilde=s_tilde,
        s_missing=1.0 if missing else 0.0,
        pair_distance=span_distance(candidate.symbol_span, candidate.value_span)
        / max_pair_distance,
        kind_is_rel=1.0 if candidate.kind is RelationKind.TICK_REL else 0.0,
    )


def standardize(feats: FusionFeatures, s_mean: float, s_std: float) -> FusionFeatures:
    if feats.s_missing:
        s = 0.0  # indicator carries the information; imputed at the mean
    else:
        s = (feats.s - s_mean) / s_std
    return FusionFeatures(s=s, s_tilde=feats.s_tilde, s_missing=feats.s_missing,
                          pair_distance=feats.pair_distance, kind_is_rel=feats.kind_is_rel)


def fuse_features(
    candidate: ExtractionCandidate,
    score: ConsistencyScore | None,
    s_tilde: float,
    params: FusionParams,
    max_pair_distance: int,
) -> FusionFeatures:
    """Standardized feature vector for one candidate, using frozen constants."""
    return standardize(raw_features(candidate, score, s_tilde, max_pair_distance),
                       params.s_mean, params.s_std)


def classify(params: FusionParams, feats: FusionFeatures) -> FusionDecision:
    """Accept iff the acceptance probability strictly exceeds the threshold."""
    x = feats.vector()
    if x.shape[0] != params.weights.shape[0]:
        raise ValueError(f"feature dim {x.shape[0]} != weight dim {params.weights.shape[0]}")
    p = 1.0 / (1.0 + math.exp(-(float(params.weights @ x) + params.bias)))
    return FusionDecision(accept=p > params.threshold, p=p)


def train_fusion(
    rows: list[FusionFeatures],
    labels: list[int] | np.ndarray,
    learning_rate: float = DEFAULT_FUSION_LEARNING_RATE,
    epochs: int = DEFAULT_FUSION_EPOCHS,
    l2: float = DEFAULT_FUSION_L2,
    threshold: float = DEFAULT_THRESHOLD,
) -> FusionParams:
    """Logistic regression by full-batch gradient descent on BCE.

    The raw consistency score separates the consistency-derived labels
    perfectly, so unregularized convergence would put all weight on it and
    reduce the fusion stage to the plain threshold rule. The small L2 term
    keeps the fit at a correlation-weighted blend in which the network score
    and distance features retain influence.
    """
    if not rows:
        raise EmptyDataset("fusion training set is empty")
    labels = np.asarray(labels, dtype=np.float64)
    if labels.shape[0] != len(rows):
        raise ValueError("labels and rows disagree in length")

    present = [f.s for f in rows if not f.s_missing]
    s_mean = float(np.mean(present)) if present else 0.0
    s_scale = float(np.std(present)) if present else 1.0
    if s_scale == 0.0:
        s_scale = 1.0

    x = np.stack([standardize(f, s_mean, s_scale).vector() for f in rows])
    n = x.shape[0]
    w = np.zeros(x.shape[1])
    b = 0.0
    loss = math.nan
    for _ in range(epochs):
        z = x @ w + b
        p = 1.0 / (1.0 + np.exp(-z))
        loss = float(np.mean(np.logaddexp(0.0, z) - labels * z) + 0.5 * l2 * np.sum(w * w))
        residual = (p - labels) / n
        w -= learning_rate * (x.T @ residual + l2 * w)
        b -= learning_rate * float(residual.sum())
    return FusionParams(weights=w, bias=b, threshold=threshold,
                        s_mean=s_mean, s_std=s_scale, final_loss=loss)
