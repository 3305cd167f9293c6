"""Stage 3a: encode (document section, annotations, candidate) for the network.

Each section character becomes a vector: a one-hot over a fixed 94-character
vocabulary plus an out-of-vocabulary slot, five indicators for entity types
the parser found at that position, and two indicators marking the candidate's
own symbol and value characters. Document-level context is a hashed binary
bag of word unigrams and bigrams.
"""

from __future__ import annotations

import json
import re
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .parser import Document, EntitySpan, EntityType, ExtractionCandidate

_ALPHANUMERIC = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_PUNCTUATION = ".,;:!?'\"%$#@&*()[]{}<>+-=/\\_^"
_WHITESPACE = " \t\n"

CHAR_DIM = 95 + len(EntityType) + 2  # one-hot incl. OOV, any-entity, candidate-role
OOV_INDEX = 94
DEFAULT_SECTION_WIDTH = 200
DEFAULT_GLOBAL_DIM = 512
DEFAULT_GLOBAL_HASH_SEED = 2016
DEFAULT_NGRAM_DIM = 1024
DEFAULT_NGRAM_HASH_SEED = 77


class SectionTooWide(ValueError):
    """Candidate spans further apart than the section width allows."""


@dataclass(frozen=True)
class CharVocabulary:
    chars: str

    def __post_init__(self):
        if len(self.chars) != 94 or len(set(self.chars)) != 94:
            raise ValueError("vocabulary must contain exactly 94 distinct characters")

    def index_map(self) -> dict[str, int]:
        return {ch: i for i, ch in enumerate(self.chars)}

    def index(self, ch: str) -> int:
        return self.index_map().get(ch, OOV_INDEX)


DEFAULT_VOCABULARY = CharVocabulary(chars=_ALPHANUMERIC + _PUNCTUATION + _WHITESPACE)
_DEFAULT_INDEX = DEFAULT_VOCABULARY.index_map()


def section_window(candidate: ExtractionCandidate, document: Document, width: int) -> tuple[int, int]:
    """Smallest window of at most ``width`` chars covering both spans,
    expanded symmetrically up to ``width`` and clamped at document bounds."""
    lo = min(candidate.symbol_span[0], candidate.value_span[0])
    hi = max(candidate.symbol_span[1], candidate.value_span[1])
    core = hi - lo
    if core > width:
        raise SectionTooWide(f"candidate spans {core} chars, window is {width}")
    n = len(document.text)
    slack = width - core
    start = lo - slack // 2
    end = hi + (slack - slack // 2)
    if start < 0:
        end += -start
        start = 0
    if end > n:
        start = max(0, start - (end - n))
        end = n
    return start, end


def _compact_chars(
    document: Document,
    entities: list[EntitySpan],
    candidate: ExtractionCandidate,
    vocab: CharVocabulary,
) -> tuple[np.ndarray, np.ndarray]:
    """uint8 (T,) vocabulary indices and uint8 (T, 7) indicator flags."""
    sec_start, sec_end = candidate.section_span
    section = document.text[sec_start:sec_end]
    length = len(section)
    index_map = _DEFAULT_INDEX if vocab is DEFAULT_VOCABULARY else vocab.index_map()
    char_idx = np.fromiter(
        (index_map.get(ch, OOV_INDEX) for ch in section), dtype=np.uint8, count=length
    )
    flags = np.zeros((length, len(EntityType) + 2), dtype=np.uint8)
    for ent in entities:
        lo = max(ent.start, sec_start) - sec_start
        hi = min(ent.end, sec_end) - sec_start
        if lo < hi:
            flags[lo:hi, ent.entity_type.value] = 1
    for col, span in ((len(EntityType), candidate.symbol_span),
                      (len(EntityType) + 1, candidate.value_span)):
        lo = max(span[0], sec_start) - sec_start
        hi = min(span[1], sec_end) - sec_start
        if lo < hi:
            flags[lo:hi, col] = 1
    return char_idx, flags


def expand_features(char_idx: np.ndarray, flags: np.ndarray) -> np.ndarray:
    """Dense float64 (T, 102) feature rows from the compact encoding."""
    length = char_idx.shape[0]
    out = np.zeros((length, CHAR_DIM), dtype=np.float64)
    out[np.arange(length), char_idx] = 1.0
    out[:, 95:] = flags
    return out


def encode_characters(
    document: Document,
    entities: list[EntitySpan],
    candidate: ExtractionCandidate,
    vocab: CharVocabulary = DEFAULT_VOCABULARY,
) -> np.ndarray:
    """One feature row per character of the candidate's section."""
    char_idx, flags = _compact_chars(document, entities, candidate, vocab)
    return expand_features(char_idx, flags)


def _bucket(feature: str, seed: int, dim: int) -> int:
    return zlib.crc32(feature.encode("utf-8"), seed & 0xFFFFFFFF) & (dim - 1)


def encode_global(
    document: Document,
    dim: int = DEFAULT_GLOBAL_DIM,
    hash_seed: int = DEFAULT_GLOBAL_HASH_SEED,
) -> np.ndarray:
    """Binary hashed bag of lowercased word unigrams and bigrams."""
    if dim <= 0 or dim & (dim - 1):
        raise ValueError("global feature dimension must be a power of two")
    vec = np.zeros(dim, dtype=np.uint8)
    tokens = document.text.lower().split()
    for tok in tokens:
        vec[_bucket("u:" + tok, hash_seed, dim)] = 1
    for first, second in zip(tokens, tokens[1:]):
        vec[_bucket("b:" + first + "\x1f" + second, hash_seed, dim)] = 1
    return vec


def encode_baseline_ngrams(
    document: Document,
    entities: list[EntitySpan],
    candidate: ExtractionCandidate,
    dim: int = DEFAULT_NGRAM_DIM,
    hash_seed: int = DEFAULT_NGRAM_HASH_SEED,
) -> np.ndarray:
    """Token-level n-grams over the section with entity and candidate marks.

    Candidate-marked tokens are replaced by SYM/VAL placeholders in the word
    stream, and a parallel entity-type stream is hashed alongside, so the
    bag-of-features baseline sees which tokens belong to the candidate and
    what the parser typed them as, just not their character-level layout.
    """
    if dim <= 0 or dim & (dim - 1):
        raise ValueError("n-gram feature dimension must be a power of two")
    vec = np.zeros(dim, dtype=np.uint8)
    sec_start, sec_end = candidate.section_span
    section = document.text[sec_start:sec_end]

    word_stream: list[str] = []
    type_stream: list[str] = []
    for match in re.finditer(r"\S+", section):
        tok_start, tok_end = sec_start + match.start(), sec_start + match.end()
        if _spans_overlap(candidate.symbol_span, (tok_start, tok_end)):
            word_stream.append("\x02SYM")
        elif _spans_overlap(candidate.value_span, (tok_start, tok_end)):
            word_stream.append("\x02VAL")
        else:
            word_stream.append(match.group().lower())
        primary = "O"
        for ent in entities:
            if ent.overlaps(tok_start, tok_end):
                primary = ent.entity_type.name
                break
        type_stream.append(primary)

    for prefix, stream in (("w", word_stream), ("t", type_stream)):
        for tok in stream:
            vec[_bucket(f"{prefix}1:{tok}", hash_seed, dim)] = 1
        for first, second in zip(stream, stream[1:]):
            vec[_bucket(f"{prefix}2:{first}\x1f{second}", hash_seed, dim)] = 1
    return vec


def _spans_overlap(a: tuple[int, int], b: tuple[int, int]) -> bool:
    return a[0] < b[1] and b[0] < a[1]


@dataclass
class EncodedCandidate:
    """Compact encoding of one candidate, expanded to dense rows on demand."""

    candidate_id: str
    char_idx: np.ndarray  # uint8 (T,)
    flags: np.ndarray  # uint8 (T, 7)
    g: np.ndarray  # uint8 (G,)
    label: int | None = None

    def __len__(self) -> int:
        return self.char_idx.shape[0]

    def features(self) -> np.ndarray:
        return expand_features(self.char_idx, self.flags)

    def global_features(self) -> np.ndarray:
        return self.g.astype(np.float64)


def encode_candidate(
    document: Document,
    entities: list[EntitySpan],
    candidate: ExtractionCandidate,
    vocab: CharVocabulary = DEFAULT_VOCABULARY,
    global_dim: int = DEFAULT_GLOBAL_DIM,
    global_hash_seed: int = DEFAULT_GLOBAL_HASH_SEED,
    label: int | None = None,
    g: np.ndarray | None = None,
) -> EncodedCandidate:
    char_idx, flags = _compact_chars(document, entities, candidate, vocab)
    if len(char_idx) == 0:
        raise ValueError("candidate section is empty")
    if g is None:
        g = encode_global(document, global_dim, global_hash_seed)
    return EncodedCandidate(
        candidate_id=candidate.candidate_id, char_idx=char_idx, flags=flags,
        g=g, label=label,
    )


def save_encoded(
    path: str | Path,
    records: list[EncodedCandidate],
    global_dim: int,
    hash_seed: int,
    vocab: CharVocabulary = DEFAULT_VOCABULARY,
) -> None:
    """Binary training-set file plus a JSON sidecar describing its layout.

    Record layout (little-endian): u32 id length, id bytes, u8 label,
    u32 sequence length, T*102 float32 feature rows, G float32 globals.
    """
    with open(path, "wb") as fh:
        for rec in records:
            if rec.label is None:
                raise ValueError(f"record {rec.candidate_id} has no label")
            encoded_id = rec.candidate_id.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded_id)))
            fh.write(encoded_id)
            fh.write(struct.pack("<B", rec.label))
            fh.write(struct.pack("<I", len(rec)))
            fh.write(rec.features().astype("<f4").tobytes())
            fh.write(rec.global_features().astype("<f4").tobytes())
    sidecar = {
        "char_dim": CHAR_DIM,
        "global_dim": global_dim,
        "vocabulary": vocab.chars,
        "hash_seed": hash_seed,
        "count": len(records),
        "format_version": 1,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2) + "\n")


def load_encoded(path: str | Path) -> tuple[list[EncodedCandidate], dict]:
    sidecar = json.loads(Path(str(path) + ".json").read_text())
    char_dim = sidecar["char_dim"]
    global_dim = sidecar["global_dim"]
    records: list[EncodedCandidate] = []
    raw = Path(path).read_bytes()
    pos = 0
    while pos < len(raw):
        (id_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        candidate_id = raw[pos : pos + id_len].decode("utf-8")
        pos += id_len
        (label,) = struct.unpack_from("<B", raw, pos)
        pos += 1
        (length,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        rows = np.frombuffer(raw, dtype="<f4", count=length * char_dim, offset=pos)
        rows = rows.reshape(length, char_dim)
        pos += length * char_dim * 4
        g = np.frombuffer(raw, dtype="<f4", count=global_dim, offset=pos)
        pos += global_dim * 4
        char_idx = rows[:, :95].argmax(axis=1).astype(np.uint8)
        flags = rows[:, 95:].astype(np.uint8)
        records.append(EncodedCandidate(
            candidate_id=candidate_id, char_idx=char_idx, flags=flags,
            g=g.astype(np.uint8), label=int(label),
        ))
    return records, sidecar
