"""Character-LSTM correctness network: explicit forward and backward passes.

The network reads the per-character feature rows with a single-layer LSTM,
maps the document-level feature vector through a ReLU layer, and feeds the
concatenation of both into a sigmoid head. Training minimizes binary
cross-entropy against the (noisy) consistency labels; every gradient is
derived by hand and checked against finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..encoder import EncodedCandidate
from .kernels import lstm_backward_kernel, lstm_forward_kernel

PREDICTION_CLAMP = 1e-7


class DimensionMismatch(ValueError):
    pass


class EmptyDataset(ValueError):
    pass


@dataclass
class LstmParams:
    """Packed-gate LSTM weights: w_z is (4H, D+H), gate order [i, f, o, g]."""

    w_z: np.ndarray
    bias: np.ndarray

    @property
    def hidden_size(self) -> int:
        return self.w_z.shape[0] // 4

    @property
    def input_size(self) -> int:
        return self.w_z.shape[1] - self.hidden_size


@dataclass
class FcParams:
    weight: np.ndarray  # (out, in)
    bias: np.ndarray  # (out,)
    activation: str = "IDENTITY"  # RELU | SIGMOID | IDENTITY


@dataclass
class NetworkParams:
    lstm: LstmParams
    fc_g: FcParams  # global features G -> K, ReLU
    head: FcParams  # (H + K) -> 1, sigmoid

    @property
    def char_dim(self) -> int:
        return self.lstm.input_size

    @property
    def hidden_size(self) -> int:
        return self.lstm.hidden_size

    @property
    def global_dim(self) -> int:
        return self.fc_g.weight.shape[1]

    @property
    def global_fc_dim(self) -> int:
        return self.fc_g.weight.shape[0]

    def tensors(self) -> dict[str, np.ndarray]:
        return {
            "lstm.w_z": self.lstm.w_z,
            "lstm.bias": self.lstm.bias,
            "fc_g.weight": self.fc_g.weight,
            "fc_g.bias": self.fc_g.bias,
            "head.weight": self.head.weight,
            "head.bias": self.head.bias,
        }

    def copy(self) -> "NetworkParams":
        return NetworkParams(
            lstm=LstmParams(self.lstm.w_z.copy(), self.lstm.bias.copy()),
            fc_g=FcParams(self.fc_g.weight.copy(), self.fc_g.bias.copy(), "RELU"),
            head=FcParams(self.head.weight.copy(), self.head.bias.copy(), "SIGMOID"),
        )


@dataclass(frozen=True)
class NetworkScore:
    y_tilde: float
    s_tilde: float


Grads = dict[str, np.ndarray]


def init_network(
    char_dim: int,
    global_dim: int,
    hidden_size: int = 64,
    global_fc_dim: int = 32,
    seed: int = 0,
    init_scale: float = 0.08,
) -> NetworkParams:
    """Uniform init in [-init_scale, init_scale]; forget-gate bias starts at 1."""
    rng = np.random.default_rng([seed, 11])
    h, d, g, k = hidden_size, char_dim, global_dim, global_fc_dim
    w_z = rng.uniform(-init_scale, init_scale, size=(4 * h, d + h))
    bias = np.zeros(4 * h)
    bias[h : 2 * h] = 1.0
    fc_g = FcParams(rng.uniform(-init_scale, init_scale, size=(k, g)), np.zeros(k), "RELU")
    head = FcParams(rng.uniform(-init_scale, init_scale, size=(1, h + k)), np.zeros(1), "SIGMOID")
    return NetworkParams(lstm=LstmParams(w_z, bias), fc_g=fc_g, head=head)


def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def logit(p):
    return np.log(p / (1.0 - p))


def clamp_prediction(y_tilde):
    return np.clip(y_tilde, PREDICTION_CLAMP, 1.0 - PREDICTION_CLAMP)


def _split_weights(lstm: LstmParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Contiguous (w_xT, w_hT, w_h) views of the packed gate matrix."""
    input_dim = lstm.input_size
    w_xT = np.ascontiguousarray(lstm.w_z[:, :input_dim].T)
    w_h = np.ascontiguousarray(lstm.w_z[:, input_dim:])
    w_hT = np.ascontiguousarray(w_h.T)
    return w_xT, w_hT, w_h


def lstm_forward(params: LstmParams, sequence: np.ndarray):
    """Final hidden state for one sequence plus the caches backprop needs."""
    if sequence.ndim != 2 or sequence.shape[1] != params.input_size:
        raise DimensionMismatch(
            f"expected (T, {params.input_size}) input, got {sequence.shape}")
    if sequence.shape[0] < 1:
        raise DimensionMismatch("sequence must have at least one step")
    x = np.ascontiguousarray(sequence[:, None, :], dtype=np.float64)
    lengths = np.array([sequence.shape[0]], dtype=np.int64)
    w_xT, w_hT, _ = _split_weights(params)
    hs, cs, gates = lstm_forward_kernel(w_xT, w_hT, params.bias, x, lengths)
    return hs[-1, 0], (hs, cs, gates, x, lengths)


@dataclass
class _BatchCache:
    x: np.ndarray
    lengths: np.ndarray
    gmat: np.ndarray
    hs: np.ndarray
    cs: np.ndarray
    gates: np.ndarray
    u_pre: np.ndarray
    u: np.ndarray
    feat: np.ndarray
    z_head: np.ndarray
    y_tilde: np.ndarray


def forward_batch(params: NetworkParams, x: np.ndarray, lengths: np.ndarray,
                  gmat: np.ndarray) -> _BatchCache:
    """Batched forward pass over padded sequences."""
    if x.shape[2] != params.char_dim:
        raise DimensionMismatch(f"char dim {x.shape[2]} != {params.char_dim}")
    if gmat.shape[1] != params.global_dim:
        raise DimensionMismatch(f"global dim {gmat.shape[1]} != {params.global_dim}")
    w_xT, w_hT, _ = _split_weights(params.lstm)
    hs, cs, gates = lstm_forward_kernel(w_xT, w_hT, params.lstm.bias, x, lengths)
    h_last = hs[-1]
    u_pre = gmat @ params.fc_g.weight.T + params.fc_g.bias
    u = np.maximum(u_pre, 0.0)
    feat = np.concatenate([h_last, u], axis=1)
    z_head = feat @ params.head.weight.T + params.head.bias
    z_head = z_head[:, 0]
    y_tilde = sigmoid(z_head)
    return _BatchCache(x, lengths, gmat, hs, cs, gates, u_pre, u, feat, z_head, y_tilde)


def batch_loss(cache: _BatchCache, labels: np.ndarray) -> float:
    """Mean BCE computed from the head pre-activation (numerically stable)."""
    z = cache.z_head
    return float(np.mean(np.logaddexp(0.0, z) - labels * z))


def backward_batch(params: NetworkParams, cache: _BatchCache,
                   labels: np.ndarray) -> Grads:
    """Gradients of the mean batch BCE w.r.t. every parameter tensor."""
    batch = labels.shape[0]
    hidden = params.hidden_size
    dz_head = (cache.y_tilde - labels) / batch
    d_head_w = (dz_head[None, :] @ cache.feat)
    d_head_b = np.array([dz_head.sum()])
    dfeat = dz_head[:, None] @ params.head.weight
    dh_last = np.ascontiguousarray(dfeat[:, :hidden])
    du = dfeat[:, hidden:]
    du_pre = du * (cache.u_pre > 0.0)
    d_fcg_w = du_pre.T @ cache.gmat
    d_fcg_b = du_pre.sum(axis=0)
    _, _, w_h = _split_weights(params.lstm)
    dw_x, dw_h, db = lstm_backward_kernel(
        w_h, cache.x, cache.lengths, cache.hs, cache.cs, cache.gates, dh_last)
    dw_z = np.concatenate([dw_x, dw_h], axis=1)
    return {
        "lstm.w_z": dw_z,
        "lstm.bias": db,
        "fc_g.weight": d_fcg_w,
        "fc_g.bias": d_fcg_b,
        "head.weight": d_head_w,
        "head.bias": d_head_b,
    }


def pack_batch(records: list[EncodedCandidate], char_dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Dense padded (x, lengths, gmat) arrays from compact encodings."""
    from ..encoder import CHAR_DIM

    if char_dim != CHAR_DIM:
        raise DimensionMismatch(f"compact records encode {CHAR_DIM} dims, not {char_dim}")
    batch = len(records)
    max_len = max(len(r) for r in records)
    x = np.zeros((max_len, batch, char_dim))
    lengths = np.empty(batch, dtype=np.int64)
    gmat = np.empty((batch, records[0].g.shape[0]))
    for b, rec in enumerate(records):
        n = len(rec)
        lengths[b] = n
        x[np.arange(n), b, rec.char_idx] = 1.0
        x[:n, b, 95:] = rec.flags
        gmat[b] = rec.g
    return x, lengths, gmat


def network_forward(params: NetworkParams, enc: EncodedCandidate) -> NetworkScore:
    """Correctness estimate for a single encoded candidate."""
    x, lengths, gmat = pack_batch([enc], params.char_dim)
    cache = forward_batch(params, x, lengths, gmat)
    y = float(clamp_prediction(cache.y_tilde[0]))
    return NetworkScore(y_tilde=y, s_tilde=float(logit(y)))


def network_score(params: NetworkParams, encs: list[EncodedCandidate],
                  batch_size: int = 64) -> list[NetworkScore]:
    """Scores for many candidates; per-candidate results are order-independent
    because each sequence is padded and masked independently."""
    out: list[NetworkScore] = []
    for start in range(0, len(encs), batch_size):
        chunk = encs[start : start + batch_size]
        x, lengths, gmat = pack_batch(chunk, params.char_dim)
        cache = forward_batch(params, x, lengths, gmat)
        for y_raw in cache.y_tilde:
            y = float(clamp_prediction(y_raw))
            out.append(NetworkScore(y_tilde=y, s_tilde=float(logit(y))))
    return out


def bce_loss(y_tilde, y) -> float:
    """Binary cross-entropy with the prediction clamp applied."""
    y_tilde = clamp_prediction(np.asarray(y_tilde, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    return float(np.mean(-(y * np.log(y_tilde) + (1.0 - y) * np.log(1.0 - y_tilde))))


def backward(params: NetworkParams, batch: list[EncodedCandidate]) -> Grads:
    """Gradients of mean BCE over a batch of labeled encoded candidates."""
    if not batch:
        raise EmptyDataset("backward needs at least one candidate")
    labels = np.array([rec.label for rec in batch], dtype=np.float64)
    x, lengths, gmat = pack_batch(batch, params.char_dim)
    cache = forward_batch(params, x, lengths, gmat)
    return backward_batch(params, cache, labels)
