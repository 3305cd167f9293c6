"""Binary model checkpoints with a JSON manifest sidecar.

Layout (little-endian): 4 magic bytes, u32 format version, u8 model kind,
five u32 dimensions, then the parameter tensors row-major as float64. The
manifest carries the training config and history; neither file embeds
timestamps, so identical runs produce identical bytes.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .baseline import BaselineParams
from .model import FcParams, LstmParams, NetworkParams

MAGIC = b"TKXC"
FORMAT_VERSION = 1
KIND_NETWORK = 0
KIND_BASELINE = 1


def _write(path: Path, kind: int, dims: tuple[int, int, int, int, int],
           tensors: list[np.ndarray]) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<B", kind))
        fh.write(struct.pack("<5I", *dims))
        for tensor in tensors:
            fh.write(np.ascontiguousarray(tensor, dtype="<f8").tobytes())


def _read_header(raw: bytes, expected_kind: int) -> tuple[tuple[int, ...], int]:
    if raw[:4] != MAGIC:
        raise ValueError("not a tickex checkpoint")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (kind,) = struct.unpack_from("<B", raw, 8)
    if kind != expected_kind:
        raise ValueError(f"checkpoint kind {kind} != expected {expected_kind}")
    dims = struct.unpack_from("<5I", raw, 9)
    return dims, 9 + 20


def _take(raw: bytes, offset: int, shape: tuple[int, ...]) -> tuple[np.ndarray, int]:
    count = int(np.prod(shape))
    arr = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    return arr.reshape(shape).copy(), offset + count * 8


def _manifest_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def _write_manifest(path: str | Path, manifest: dict) -> None:
    _manifest_path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_manifest(path: str | Path) -> dict:
    return json.loads(_manifest_path(path).read_text())


def save_network(path: str | Path, params: NetworkParams, manifest: dict | None = None) -> None:
    dims = (params.char_dim, params.hidden_size, params.global_dim,
            params.global_fc_dim, 0)
    tensors = [params.lstm.w_z, params.lstm.bias, params.fc_g.weight,
               params.fc_g.bias, params.head.weight, params.head.bias]
    _write(Path(path), KIND_NETWORK, dims, tensors)
    _write_manifest(path, manifest or {})


def load_network(path: str | Path) -> NetworkParams:
    raw = Path(path).read_bytes()
    (d, h, g, k, _), offset = _read_header(raw, KIND_NETWORK)
    w_z, offset = _take(raw, offset, (4 * h, d + h))
    bias, offset = _take(raw, offset, (4 * h,))
    fcg_w, offset = _take(raw, offset, (k, g))
    fcg_b, offset = _take(raw, offset, (k,))
    head_w, offset = _take(raw, offset, (1, h + k))
    head_b, offset = _take(raw, offset, (1,))
    return NetworkParams(
        lstm=LstmParams(w_z, bias),
        fc_g=FcParams(fcg_w, fcg_b, "RELU"),
        head=FcParams(head_w, head_b, "SIGMOID"),
    )


def save_baseline(path: str | Path, params: BaselineParams, manifest: dict | None = None) -> None:
    dims = (params.input_dim, params.hidden_dim, 0, 0, 0)
    tensors = [params.w1, params.b1, params.w2, params.b2]
    _write(Path(path), KIND_BASELINE, dims, tensors)
    _write_manifest(path, manifest or {})


def load_baseline(path: str | Path) -> BaselineParams:
    raw = Path(path).read_bytes()
    (input_dim, hidden, _, _, _), offset = _read_header(raw, KIND_BASELINE)
    w1, offset = _take(raw, offset, (hidden, input_dim))
    b1, offset = _take(raw, offset, (hidden,))
    w2, offset = _take(raw, offset, (1, hidden))
    b2, offset = _take(raw, offset, (1,))
    return BaselineParams(w1, b1, w2, b2)
