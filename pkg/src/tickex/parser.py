"""Stage 1: high-recall candidate parser.

Annotates symbols, numbers, changes, dates, and times at character offsets,
then pairs symbols with nearby values into relation candidates, dropping only
those that violate a numeric range constraint. Precision is someone else's
job; recall is this module's contract.
"""

from __future__ import annotations

import enum
import json
import re
from dataclasses import dataclass, field
from pathlib import Path


class RelationKind(enum.Enum):
    TICK_ABS = 0
    TICK_REL = 1


class EntityType(enum.Enum):
    TS_SYMBOL = 0
    NUMERIC_VALUE = 1
    CHANGE_VALUE = 2
    DATE = 3
    TIME = 4


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    timestamp: int

    def __post_init__(self):
        if not self.text:
            raise ValueError("document text must be non-empty")


@dataclass(frozen=True)
class EntitySpan:
    entity_type: EntityType
    start: int
    end: int
    normalized: str | float

    def overlaps(self, start: int, end: int) -> bool:
        return self.start < end and start < self.end


@dataclass(frozen=True)
class ExtractionCandidate:
    doc_id: str
    kind: RelationKind
    symbol: str
    value: float
    symbol_span: tuple[int, int]
    value_span: tuple[int, int]
    section_span: tuple[int, int]
    timestamp: int
    aux: dict = field(default_factory=dict, compare=False)

    @property
    def candidate_id(self) -> str:
        return (f"{self.doc_id}:{self.kind.name}:{self.symbol}"
                f":{self.symbol_span[0]}-{self.symbol_span[1]}"
                f":{self.value_span[0]}-{self.value_span[1]}")


DEFAULT_MAX_PAIR_DISTANCE = 160


@dataclass(frozen=True)
class ConstraintSet:
    """Per (symbol, kind) inclusive value ranges plus the pairing window."""

    ranges: dict[tuple[str, RelationKind], tuple[float, float]]
    max_pair_distance: int = DEFAULT_MAX_PAIR_DISTANCE

    def save_json(self, path: str | Path) -> None:
        by_symbol: dict[str, dict] = {}
        for (symbol, kind), (lo, hi) in self.ranges.items():
            entry = by_symbol.setdefault(symbol, {})
            entry["abs" if kind is RelationKind.TICK_ABS else "rel"] = [lo, hi]
        Path(path).write_text(json.dumps(by_symbol, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load_json(cls, path: str | Path,
                  max_pair_distance: int = DEFAULT_MAX_PAIR_DISTANCE) -> "ConstraintSet":
        by_symbol = json.loads(Path(path).read_text())
        ranges = {}
        for symbol, entry in by_symbol.items():
            if "abs" in entry:
                ranges[(symbol, RelationKind.TICK_ABS)] = tuple(entry["abs"])
            if "rel" in entry:
                ranges[(symbol, RelationKind.TICK_REL)] = tuple(entry["rel"])
        return cls(ranges=ranges, max_pair_distance=max_pair_distance)

    @classmethod
    def from_symbol_table(cls, symbols,
                          max_pair_distance: int = DEFAULT_MAX_PAIR_DISTANCE) -> "ConstraintSet":
        ranges = {}
        for spec in symbols.specs:
            ranges[(spec.symbol, RelationKind.TICK_ABS)] = spec.abs_range
            ranges[(spec.symbol, RelationKind.TICK_REL)] = spec.rel_range
        return cls(ranges=ranges, max_pair_distance=max_pair_distance)


_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}|\d{2}/\d{2}/\d{4}")
_TIME_RE = re.compile(r"\d{1,2}:\d{2}(?:\s?[ap]m)?", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[+-]?\d{1,3}(?:,\d{3})+(?:\.\d+)?%?|[+-]?\d+(?:\.\d+)?%?")

NEGATIVE_CUES = frozenset({"down", "fell", "lost", "-"})
POSITIVE_CUES = frozenset({"up", "rose", "gained", "+"})
_CUE_CONNECTORS = frozenset({"by"})


def _word_bounded(text: str, start: int, end: int) -> bool:
    # a leading "." would mean we matched the tail of a decimal; a trailing
    # "." is ordinary sentence punctuation and stays legal
    before = text[start - 1] if start > 0 else " "
    after = text[end] if end < len(text) else " "
    return not (before.isalnum() or before == ".") and not after.isalnum()


def _find_alias_spans(text: str, symbols) -> list[EntitySpan]:
    lowered = text.lower()
    hits: list[tuple[int, int, str]] = []
    for alias, symbol in symbols.alias_map().items():
        search_from = 0
        while True:
            idx = lowered.find(alias, search_from)
            if idx < 0:
                break
            end = idx + len(alias)
            before_ok = idx == 0 or not lowered[idx - 1].isalnum()
            after_ok = end == len(lowered) or not lowered[end].isalnum()
            if before_ok and after_ok:
                hits.append((idx, end, symbol))
            search_from = idx + 1
    # longest match wins, then left-to-right non-overlap
    hits.sort(key=lambda h: (-(h[1] - h[0]), h[0]))
    chosen: list[tuple[int, int, str]] = []
    for start, end, symbol in hits:
        if all(end <= s or e <= start for s, e, _ in chosen):
            chosen.append((start, end, symbol))
    chosen.sort(key=lambda h: h[0])
    return [EntitySpan(EntityType.TS_SYMBOL, s, e, symbol) for s, e, symbol in chosen]


def _preceding_words(text: str, pos: int, count: int = 2) -> list[str]:
    return text[:pos].lower().split()[-count:]


def _change_sign(text: str, num_start: int, token: str) -> float | None:
    """Signed multiplier when the token is governed by a change cue, else None."""
    if token.startswith("+"):
        return 1.0
    if token.startswith("-"):
        return -1.0
    words = _preceding_words(text, num_start)
    if words:
        last = words[-1]
        if last in NEGATIVE_CUES:
            return -1.0
        if last in POSITIVE_CUES:
            return 1.0
        if last in _CUE_CONNECTORS and len(words) > 1:
            if words[-2] in NEGATIVE_CUES:
                return -1.0
            if words[-2] in POSITIVE_CUES:
                return 1.0
    return None


def annotate_entities(document: Document, symbols) -> list[EntitySpan]:
    """All entity spans in the document, sorted by (start, entity type).

    Date and time matches suppress the plain-number reading of the characters
    they cover; a number governed by a change cue carries an additional
    CHANGE_VALUE span with the cue's sign applied.
    """
    text = document.text
    spans: list[EntitySpan] = list(_find_alias_spans(text, symbols))

    blocked: list[tuple[int, int]] = []
    for match in _DATE_RE.finditer(text):
        if _word_bounded(text, match.start(), match.end()):
            spans.append(EntitySpan(EntityType.DATE, match.start(), match.end(), match.group()))
            blocked.append((match.start(), match.end()))
    for match in _TIME_RE.finditer(text):
        start, end = match.start(), match.end()
        if any(start < be and bs < end for bs, be in blocked):
            continue
        if _word_bounded(text, start, end):
            spans.append(EntitySpan(EntityType.TIME, start, end, match.group()))
            blocked.append((start, end))

    for match in _NUMBER_RE.finditer(text):
        start, end = match.start(), match.end()
        if any(start < be and bs < end for bs, be in blocked):
            continue
        if not _word_bounded(text, start, end):
            continue
        token = match.group()
        face = float(token.rstrip("%").replace(",", ""))
        spans.append(EntitySpan(EntityType.NUMERIC_VALUE, start, end, face))
        sign = _change_sign(text, start, token)
        if sign is not None:
            signed = sign * abs(face)
            spans.append(EntitySpan(EntityType.CHANGE_VALUE, start, end, signed))

    spans.sort(key=lambda s: (s.start, s.entity_type.value))
    return spans


def span_distance(a: tuple[int, int], b: tuple[int, int]) -> int:
    """Character gap between two spans; 0 when they touch or overlap."""
    if a[1] <= b[0]:
        return b[0] - a[1]
    if b[1] <= a[0]:
        return a[0] - b[1]
    return 0


def apply_constraints(candidate: ExtractionCandidate, constraints: ConstraintSet) -> bool:
    """Inclusive range check plus the pairing-window check.

    Unknown (symbol, kind) pairs are accepted: the parser must not silently
    drop candidates it has no evidence against.
    """
    if span_distance(candidate.symbol_span, candidate.value_span) > constraints.max_pair_distance:
        return False
    bounds = constraints.ranges.get((candidate.symbol, candidate.kind))
    if bounds is None:
        return True
    lo, hi = bounds
    return lo <= candidate.value <= hi


def generate_candidates(
    document: Document,
    entities: list[EntitySpan],
    constraints: ConstraintSet,
    section_width: int = 200,
) -> list[ExtractionCandidate]:
    """Exhaustive (symbol, value) pairing within the window.

    Every in-window (TS_SYMBOL, NUMERIC_VALUE) pair yields a TICK_ABS
    candidate and every (TS_SYMBOL, CHANGE_VALUE) pair a TICK_REL candidate.
    A cue-governed number is read as its signed change even for the TICK_ABS
    candidate ("fell 0.2%" proposes an absolute level of -0.2, which a
    non-negative series constraint then rejects).
    """
    from .encoder import section_window

    symbols = [e for e in entities if e.entity_type is EntityType.TS_SYMBOL]
    numerics = [e for e in entities if e.entity_type is EntityType.NUMERIC_VALUE]
    changes = {(e.start, e.end): e for e in entities
               if e.entity_type is EntityType.CHANGE_VALUE}

    candidates: list[ExtractionCandidate] = []
    for sym in symbols:
        for num in numerics:
            change = changes.get((num.start, num.end))
            pairs: list[tuple[RelationKind, float]] = []
            abs_value = change.normalized if change is not None else num.normalized
            pairs.append((RelationKind.TICK_ABS, float(abs_value)))
            if change is not None:
                pairs.append((RelationKind.TICK_REL, float(change.normalized)))
            for kind, value in pairs:
                candidate = ExtractionCandidate(
                    doc_id=document.doc_id,
                    kind=kind,
                    symbol=str(sym.normalized),
                    value=value,
                    symbol_span=(sym.start, sym.end),
                    value_span=(num.start, num.end),
                    section_span=(0, 0),
                    timestamp=document.timestamp,
                )
                if not apply_constraints(candidate, constraints):
                    continue
                section = section_window(candidate, document, section_width)
                candidates.append(ExtractionCandidate(
                    doc_id=candidate.doc_id, kind=candidate.kind, symbol=candidate.symbol,
                    value=candidate.value, symbol_span=candidate.symbol_span,
                    value_span=candidate.value_span, section_span=section,
                    timestamp=candidate.timestamp,
                ))

    candidates.sort(key=lambda c: (c.symbol_span[0], c.value_span[0], c.kind.value))
    return candidates


def candidate_to_json(candidate: ExtractionCandidate, **extra) -> dict:
    row = {
        "doc_id": candidate.doc_id,
        "kind": candidate.kind.name,
        "symbol": candidate.symbol,
        "value": candidate.value,
        "symbol_span": list(candidate.symbol_span),
        "value_span": list(candidate.value_span),
        "section_span": list(candidate.section_span),
        "timestamp": candidate.timestamp,
    }
    row.update(extra)
    return row


def candidate_from_json(row: dict) -> ExtractionCandidate:
    return ExtractionCandidate(
        doc_id=row["doc_id"],
        kind=RelationKind[row["kind"]],
        symbol=row["symbol"],
        value=row["value"],
        symbol_span=tuple(row["symbol_span"]),
        value_span=tuple(row["value_span"]),
        section_span=tuple(row["section_span"]),
        timestamp=row["timestamp"],
    )
