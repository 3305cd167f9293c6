"""Deterministic synthetic financial-text corpus with a matching store.

Documents are generated from sentence templates with exact ground-truth
character spans, alongside a time-series store whose points agree with the
text except for a configurable fraction of perturbed points (the supervision
noise). All randomness derives from per-document sub-seeds of one master
seed, so regenerating with more documents never reshuffles earlier ones.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .parser import RelationKind
from .tsdb import TimeSeriesStore

EPOCH_BASE = 1451606400  # 2016-01-01T00:00:00Z
POINTS_PER_SYMBOL = 40
POINT_SPACING = 86400
DOC_OFFSET = 1800  # documents arrive shortly after the data point they report

# rng stream tags under the master seed
_TAG_DOCUMENT = 0
_TAG_NOISE = 1
_TAG_WALK = 3


@dataclass(frozen=True)
class CorpusConfig:
    num_documents: int
    distractor_rate: float = 0.0
    db_noise_rate: float = 0.05
    ambiguity_rate: float = 0.0
    value_jitter: float = 0.2
    seed: int = 0

    def validate(self) -> None:
        if self.num_documents < 1:
            raise ValueError("num_documents must be >= 1")
        for name in ("distractor_rate", "db_noise_rate", "ambiguity_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {rate}")
        if self.value_jitter < 0.0:
            raise ValueError("value_jitter must be >= 0")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class GroundTruthRelation:
    kind: RelationKind
    symbol: str
    value: float
    symbol_span: tuple[int, int]
    value_span: tuple[int, int]


@dataclass(frozen=True)
class SyntheticDocument:
    doc_id: str
    text: str
    timestamp: int
    ground_truth: tuple[GroundTruthRelation, ...]


@dataclass(frozen=True)
class SymbolSpec:
    symbol: str
    aliases: tuple[str, ...]
    abs_range: tuple[float, float]
    rel_range: tuple[float, float]
    band: tuple[float, float]  # random-walk band, strictly inside abs_range
    decimals: int
    unit: str
    group: str  # symbols in one group trade close to each other
    max_step_units: int


@dataclass(frozen=True)
class SymbolTable:
    specs: tuple[SymbolSpec, ...]

    def by_symbol(self, symbol: str) -> SymbolSpec:
        for spec in self.specs:
            if spec.symbol == symbol:
                return spec
        raise KeyError(symbol)

    def alias_map(self) -> dict[str, str]:
        """Lowercased alias -> symbol."""
        out: dict[str, str] = {}
        for spec in self.specs:
            for alias in spec.aliases:
                out[alias.lower()] = spec.symbol
        return out

    def save_json(self, path: str | Path) -> None:
        rows = [
            {
                "symbol": s.symbol,
                "aliases": list(s.aliases),
                "min_value": s.abs_range[0],
                "max_value": s.abs_range[1],
                "rel_min": s.rel_range[0],
                "rel_max": s.rel_range[1],
            }
            for s in self.specs
        ]
        Path(path).write_text(json.dumps(rows, indent=2) + "\n")

    @classmethod
    def load_json(cls, path: str | Path) -> "SymbolTable":
        rows = json.loads(Path(path).read_text())
        specs = []
        for row in rows:
            base = _SPEC_INDEX.get(row["symbol"])
            specs.append(
                SymbolSpec(
                    symbol=row["symbol"],
                    aliases=tuple(row["aliases"]),
                    abs_range=(row["min_value"], row["max_value"]),
                    rel_range=(row["rel_min"], row["rel_max"]),
                    band=base.band if base else (row["min_value"], row["max_value"]),
                    decimals=base.decimals if base else 2,
                    unit=base.unit if base else "",
                    group=base.group if base else "",
                    max_step_units=base.max_step_units if base else 1,
                )
            )
        return cls(specs=tuple(specs))


def _spec(symbol, aliases, abs_range, rel_range, band, decimals, unit, group, max_step_units):
    return SymbolSpec(symbol, tuple(aliases), abs_range, rel_range, band, decimals, unit, group,
                      max_step_units)


# Built-in universe. Symbols within a group walk inside a shared band so that
# a value quoted for one group member often fits a sibling's recent history,
# which is what makes wrong pairings slip past the consistency check.
# Band widths sit near twenty times the 5% consistency tolerance at the band
# center, so a sibling's value coincidentally fits a symbol's own history in
# roughly a tenth of wrong pairings: enough to give the consistency baseline
# a real false-positive population, rare enough that the cross-pairing text
# pattern still carries a mostly-negative supervision signal.
DEFAULT_SYMBOLS = SymbolTable(specs=(
    _spec("US_Unemployment", ["US unemployment", "US jobless rate", "American unemployment"],
          (0.0, 100.0), (-100.0, 100.0), (3.0, 8.0), 1, "%", "unemployment", 5),
    _spec("EZ_Unemployment", ["euro zone unemployment", "eurozone jobless rate",
                              "euro area unemployment"],
          (0.0, 100.0), (-100.0, 100.0), (3.2, 8.2), 1, "%", "unemployment", 5),
    _spec("UK_CPI_YoY", ["UK inflation", "British CPI", "UK consumer inflation"],
          (0.0, 100.0), (-100.0, 100.0), (1.0, 3.0), 2, "%", "inflation", 20),
    _spec("DE_CPI_YoY", ["German inflation", "German CPI", "Germany consumer prices"],
          (0.0, 100.0), (-100.0, 100.0), (1.1, 3.1), 2, "%", "inflation", 20),
    _spec("US_GDP_Growth", ["US GDP growth", "American GDP growth", "US economic growth"],
          (-25.0, 25.0), (-50.0, 50.0), (-1.5, 3.5), 1, "%", "growth", 6),
    _spec("JP_GDP_Growth", ["Japan GDP growth", "Japanese economic growth"],
          (-25.0, 25.0), (-50.0, 50.0), (-1.2, 3.2), 1, "%", "growth", 6),
    _spec("WTI_Crude", ["WTI crude", "US crude oil", "West Texas crude"],
          (0.0, 500.0), (-200.0, 200.0), (25.0, 73.0), 2, "", "oil", 150),
    _spec("Brent_Crude", ["Brent crude", "North Sea Brent", "Brent oil"],
          (0.0, 500.0), (-200.0, 200.0), (27.0, 75.0), 2, "", "oil", 150),
    _spec("SPX_Index", ["the S&P", "SPX benchmark", "US large-cap index"],
          (0.0, 10000.0), (-1000.0, 1000.0), (1000.0, 3000.0), 1, "", "equity", 300),
    _spec("NDX_Index", ["the Nasdaq", "NDX benchmark", "US tech index"],
          (0.0, 10000.0), (-1000.0, 1000.0), (1200.0, 3200.0), 1, "", "equity", 300),
    _spec("EURUSD", ["euro-dollar", "EUR/USD", "the single currency"],
          (0.0, 10.0), (-5.0, 5.0), (0.70, 1.60), 4, "", "fx", 120),
    _spec("GBPUSD", ["sterling", "GBP/USD", "cable"],
          (0.0, 10.0), (-5.0, 5.0), (0.75, 1.65), 4, "", "fx", 120),
))

_SPEC_INDEX = {s.symbol: s for s in DEFAULT_SYMBOLS.specs}

# Sentence templates. Placeholders: {sym} {sym2} symbol aliases, {val} {val2}
# formatted levels, {mag} unsigned change with a cue verb, {chg} signed change.
ABS_TEMPLATES = (
    "{sym} at {val} on the day.",
    "{sym} came in at {val}, analysts said.",
    "BREAKING: {sym} hits {val}",
    "{sym} was reported at {val} this morning.",
    "Latest print: {sym} now {val}.",
    "{sym} holding near {val} in early trade.",
    "Data release: {sym} stands at {val}.",
    "{sym} steadied at {val} after the open.",
    "Survey shows {sym} at {val} for the month.",
    "{sym} closed at {val}.",
    "{sym} finished the session at {val}.",
    "Official figure puts {sym} at {val}.",
    "Flash estimate: {sym} at {val}.",
    "{sym} little changed at {val}.",
    "Month-end reading has {sym} at {val}.",
    "Desk note: {sym} marked at {val}.",
    "{sym} printed {val} just now.",
    "Heads up: {sym} now at {val}.",
    "{sym} pegged at {val} by the afternoon.",
    "Midday check: {sym} at {val}.",
)

# Cue verbs must stay inside the parser's cue vocabulary or recall suffers.
REL_TEMPLATES = (
    "{sym} fell {mag} to {val}.",
    "{sym} rose {mag} to {val}.",
    "{sym} fell {mag} on the session.",
    "{sym} rose {mag} in late trading.",
    "{sym} gained {mag} after the report.",
    "{sym} lost {mag} by the close.",
    "{sym} up {mag} since the last reading.",
    "{sym} down {mag} from the prior print.",
    "{sym} gained {mag} to reach {val}.",
    "{sym} lost {mag} to end at {val}.",
    "{sym} up {mag}, now at {val}.",
    "{sym} down {mag}, last at {val}.",
    "{sym} moved {chg} on the day.",
    "Change in {sym}: {chg}.",
    "{sym} fell by {mag} overnight.",
    "{sym} rose by {mag} at the open.",
    "Session recap: {sym} fell {mag}.",
    "Session recap: {sym} rose {mag}.",
    "{sym} gained {mag} versus the prior close.",
    "{sym} lost {mag} in thin trading.",
)

# Ambiguous documents: a second symbol from the same group appears near the
# value, so the parser emits a wrong pairing alongside the right one.
AMB_ONE_VALUE_TEMPLATES = (
    "With {sym2} still in focus, {sym1} at {val}.",
    "Traders eyed {sym2} ahead of data; {sym1} printed {val}.",
    "{sym2} report due later; meanwhile {sym1} at {val}.",
    "After the {sym2} release, {sym1} steadied at {val}.",
    "Desk chatter on {sym2} aside, {sym1} marked at {val}.",
)

AMB_TWO_VALUE_TEMPLATES = (
    "{sym1} at {val} while {sym2} at {val2}.",
    "{sym1} printed {val}; {sym2} printed {val2}.",
    "{sym1} at {val} and {sym2} at {val2} in the same session.",
    "Flash: {sym1} {val}, {sym2} {val2}.",
    "{sym1} ended at {val} as {sym2} ended at {val2}.",
)


@dataclass
class PerturbedPoint:
    symbol: str
    timestamp: int
    original: float
    perturbed: float


@dataclass
class GenerationLedger:
    """Exact bookkeeping emitted by the generator, for stats and tests."""

    total_points: int = 0
    perturbed: list[PerturbedPoint] = field(default_factory=list)
    ambiguous_doc_ids: list[str] = field(default_factory=list)
    distractor_doc_ids: list[str] = field(default_factory=list)

    def noise_fraction(self) -> float:
        if self.total_points == 0:
            return 0.0
        return len(self.perturbed) / self.total_points


@dataclass(frozen=True)
class CorpusStats:
    num_documents: int
    relations_by_kind: dict[str, int]
    ambiguous_documents: int
    distractor_documents: int
    total_points: int
    perturbed_points: int
    noise_fraction: float
    distractor_density: float


class _TextBuilder:
    """Accumulates text while recording the span of each marked fragment."""

    def __init__(self):
        self._parts: list[str] = []
        self._pos = 0
        self.spans: dict[str, tuple[int, int]] = {}

    def literal(self, fragment: str) -> None:
        self._parts.append(fragment)
        self._pos += len(fragment)

    def mark(self, key: str, fragment: str) -> None:
        self.spans[key] = (self._pos, self._pos + len(fragment))
        self.literal(fragment)

    def text(self) -> str:
        return "".join(self._parts)


def _render(template: str, fragments: dict[str, str]) -> _TextBuilder:
    builder = _TextBuilder()
    pos = 0
    while True:
        open_idx = template.find("{", pos)
        if open_idx < 0:
            builder.literal(template[pos:])
            break
        close_idx = template.index("}", open_idx)
        builder.literal(template[pos:open_idx])
        key = template[open_idx + 1 : close_idx]
        builder.mark(key, fragments[key])
        pos = close_idx + 1
    return builder


def _format_value(value: float, spec: SymbolSpec) -> str:
    out = f"{value:,.{spec.decimals}f}" if abs(value) >= 1000 else f"{value:.{spec.decimals}f}"
    return out + spec.unit


def _simulate_walk(spec: SymbolSpec, rng: np.random.Generator) -> list[float]:
    """Quantized random walk inside the band; consecutive points always differ."""
    lo, hi = spec.band
    unit = 10.0 ** (-spec.decimals)
    value = round(float(rng.uniform(lo, hi)), spec.decimals)
    if value == 0.0:
        value = unit
    points = [value]
    for _ in range(POINTS_PER_SYMBOL - 1):
        step = unit * int(rng.integers(1, spec.max_step_units + 1))
        if rng.random() < 0.5:
            step = -step
        nxt = round(value + step, spec.decimals)
        if nxt > hi or nxt < lo or nxt == 0.0:
            nxt = round(value - step, spec.decimals)
        if nxt == 0.0:
            nxt = round(value + 2 * abs(step), spec.decimals)
        value = nxt
        points.append(value)
    return points


def _choose_distinct(rng: np.random.Generator, n: int) -> tuple[int, int]:
    first = int(rng.integers(0, n))
    second = int(rng.integers(0, n - 1))
    if second >= first:
        second += 1
    return first, second


_DISTRACTOR_KINDS = 6


def _distractor_clause(rng: np.random.Generator) -> str:
    kind = int(rng.integers(0, _DISTRACTOR_KINDS))
    if kind == 0:
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 29))
        hour = int(rng.integers(0, 24))
        minute = int(rng.integers(0, 60))
        return f"(updated 2016-{month:02d}-{day:02d} {hour:02d}:{minute:02d})"
    if kind == 1:
        hour = int(rng.integers(1, 13))
        minute = int(rng.integers(0, 60))
        suffix = "am" if rng.random() < 0.5 else "pm"
        return f"[wire {hour:02d}:{minute:02d}{suffix}]"
    if kind == 2:
        month = int(rng.integers(1, 13))
        day = int(rng.integers(1, 29))
        return f"-- desk memo {month:02d}/{day:02d}/2016"
    if kind == 3:
        return f"see chart {int(rng.integers(2, 31))}."
    if kind == 4:
        return f"volume {int(rng.integers(200, 10000)) * 1000:,}"
    return f"note p. {int(rng.integers(2, 31))}."


def generate_corpus(
    config: CorpusConfig, symbols: SymbolTable = DEFAULT_SYMBOLS
) -> tuple[list[SyntheticDocument], TimeSeriesStore, SymbolTable, GenerationLedger]:
    """Generate documents, the matching store, the symbol table, and a ledger.

    The pristine walk values back both the document text and the store; the
    configured fraction of store points is then perturbed multiplicatively by
    (1 +/- u * value_jitter) with u uniform on (0, 1], and every perturbation
    is recorded in the ledger.
    """
    config.validate()
    n_symbols = len(symbols.specs)

    walks: list[list[float]] = []
    for sym_idx, spec in enumerate(symbols.specs):
        rng_walk = np.random.default_rng([config.seed, _TAG_WALK, sym_idx])
        walks.append(_simulate_walk(spec, rng_walk))

    documents: list[SyntheticDocument] = []
    ledger = GenerationLedger()

    for doc_idx in range(config.num_documents):
        rng = np.random.default_rng([config.seed, _TAG_DOCUMENT, doc_idx])
        doc_id = f"doc-{doc_idx:06d}"
        point_idx = int(rng.integers(1, POINTS_PER_SYMBOL))
        timestamp = EPOCH_BASE + point_idx * POINT_SPACING + DOC_OFFSET

        ambiguous = rng.random() < config.ambiguity_rate
        relations: list[tuple[RelationKind, int, float, str, str]] = []
        # (kind, symbol index, value, symbol placeholder, value placeholder)

        if ambiguous:
            sym_idx = int(rng.integers(0, n_symbols))
            spec = symbols.specs[sym_idx]
            group = [i for i, s in enumerate(symbols.specs)
                     if s.group == spec.group and i != sym_idx]
            partner_idx = group[int(rng.integers(0, len(group)))]
            partner = symbols.specs[partner_idx]
            value = walks[sym_idx][point_idx]
            if rng.random() < 0.5:
                template = AMB_ONE_VALUE_TEMPLATES[
                    int(rng.integers(0, len(AMB_ONE_VALUE_TEMPLATES)))]
                fragments = {
                    "sym1": spec.aliases[int(rng.integers(0, len(spec.aliases)))],
                    "sym2": partner.aliases[int(rng.integers(0, len(partner.aliases)))],
                    "val": _format_value(value, spec),
                }
                relations.append((RelationKind.TICK_ABS, sym_idx, value, "sym1", "val"))
            else:
                template = AMB_TWO_VALUE_TEMPLATES[
                    int(rng.integers(0, len(AMB_TWO_VALUE_TEMPLATES)))]
                value2 = walks[partner_idx][point_idx]
                fragments = {
                    "sym1": spec.aliases[int(rng.integers(0, len(spec.aliases)))],
                    "sym2": partner.aliases[int(rng.integers(0, len(partner.aliases)))],
                    "val": _format_value(value, spec),
                    "val2": _format_value(value2, partner),
                }
                relations.append((RelationKind.TICK_ABS, sym_idx, value, "sym1", "val"))
                relations.append((RelationKind.TICK_ABS, partner_idx, value2, "sym2", "val2"))
            ledger.ambiguous_doc_ids.append(doc_id)
        else:
            sym_idx = int(rng.integers(0, n_symbols))
            spec = symbols.specs[sym_idx]
            value = walks[sym_idx][point_idx]
            if rng.random() < 0.5:
                template = ABS_TEMPLATES[int(rng.integers(0, len(ABS_TEMPLATES)))]
                fragments = {
                    "sym": spec.aliases[int(rng.integers(0, len(spec.aliases)))],
                    "val": _format_value(value, spec),
                }
                relations.append((RelationKind.TICK_ABS, sym_idx, value, "sym", "val"))
            else:
                template = REL_TEMPLATES[int(rng.integers(0, len(REL_TEMPLATES)))]
                change = round(value - walks[sym_idx][point_idx - 1], spec.decimals)
                fragments = {"sym": spec.aliases[int(rng.integers(0, len(spec.aliases)))]}
                if "{mag}" in template:
                    # cue verb carries the sign; swap fell<->rose etc. to match
                    template = _align_cue(template, change)
                    fragments["mag"] = _format_value(abs(change), spec)
                else:
                    sign = "+" if change > 0 else "-"
                    fragments["chg"] = sign + _format_value(abs(change), spec)
                relations.append((RelationKind.TICK_REL, sym_idx, change, "sym", "mag"
                                  if "{mag}" in template else "chg"))
                if "{val}" in template:
                    fragments["val"] = _format_value(value, spec)
                    relations.append((RelationKind.TICK_ABS, sym_idx, value, "sym", "val"))

        builder = _render(template, fragments)
        prefix = ""
        suffix = ""
        if rng.random() < config.distractor_rate:
            clauses = [_distractor_clause(rng) for _ in range(int(rng.integers(1, 3)))]
            if rng.random() < 0.5:
                prefix = " ".join(clauses) + " "
            else:
                suffix = " " + " ".join(clauses)
            ledger.distractor_doc_ids.append(doc_id)

        text = prefix + builder.text() + suffix
        shift = len(prefix)
        ground_truth = []
        for kind, rel_sym_idx, rel_value, sym_key, val_key in relations:
            s_start, s_end = builder.spans[sym_key]
            v_start, v_end = builder.spans[val_key]
            ground_truth.append(GroundTruthRelation(
                kind=kind,
                symbol=symbols.specs[rel_sym_idx].symbol,
                value=rel_value,
                symbol_span=(s_start + shift, s_end + shift),
                value_span=(v_start + shift, v_end + shift),
            ))
        documents.append(SyntheticDocument(
            doc_id=doc_id, text=text, timestamp=timestamp,
            ground_truth=tuple(ground_truth),
        ))

    store = TimeSeriesStore()
    rng_noise = np.random.default_rng([config.seed, _TAG_NOISE])
    for sym_idx, spec in enumerate(symbols.specs):
        for point_idx in range(POINTS_PER_SYMBOL):
            ts = EPOCH_BASE + point_idx * POINT_SPACING
            value = walks[sym_idx][point_idx]
            ledger.total_points += 1
            if rng_noise.random() < config.db_noise_rate:
                u = 1.0 - rng_noise.random()  # uniform on (0, 1]
                sign = 1.0 if rng_noise.random() < 0.5 else -1.0
                perturbed = value * (1.0 + sign * u * config.value_jitter)
                ledger.perturbed.append(PerturbedPoint(spec.symbol, ts, value, perturbed))
                value = perturbed
            store.series.setdefault(spec.symbol, []).append((ts, value))

    return documents, store, symbols, ledger


def corpus_stats(
    documents: list[SyntheticDocument],
    store: TimeSeriesStore,
    ledger: GenerationLedger,
) -> CorpusStats:
    """Exact corpus summary from the generator's ledger."""
    by_kind = {kind.name: 0 for kind in RelationKind}
    for doc in documents:
        for rel in doc.ground_truth:
            by_kind[rel.kind.name] += 1
    n = len(documents)
    return CorpusStats(
        num_documents=n,
        relations_by_kind=by_kind,
        ambiguous_documents=len(ledger.ambiguous_doc_ids),
        distractor_documents=len(ledger.distractor_doc_ids),
        total_points=ledger.total_points,
        perturbed_points=len(ledger.perturbed),
        noise_fraction=ledger.noise_fraction(),
        distractor_density=(len(ledger.distractor_doc_ids) / n) if n else 0.0,
    )


_NEGATIVE_CUES = {"fell": "rose", "lost": "gained", "down": "up"}
_POSITIVE_CUES = {v: k for k, v in _NEGATIVE_CUES.items()}


def _align_cue(template: str, change: float) -> str:
    """Flip the template's cue verb so it matches the sign of the change."""
    words = template.split(" ")
    for i, word in enumerate(words):
        if word in _NEGATIVE_CUES and change > 0:
            words[i] = _NEGATIVE_CUES[word]
            break
        if word in _POSITIVE_CUES and change < 0:
            words[i] = _POSITIVE_CUES[word]
            break
        if word in _NEGATIVE_CUES or word in _POSITIVE_CUES:
            break
    return " ".join(words)


def save_documents(documents: list[SyntheticDocument], path: str | Path) -> None:
    with open(path, "w") as fh:
        for doc in documents:
            fh.write(json.dumps({
                "doc_id": doc.doc_id,
                "text": doc.text,
                "timestamp": doc.timestamp,
                "ground_truth": [
                    {
                        "kind": rel.kind.name,
                        "symbol": rel.symbol,
                        "value": rel.value,
                        "symbol_span": list(rel.symbol_span),
                        "value_span": list(rel.value_span),
                    }
                    for rel in doc.ground_truth
                ],
            }) + "\n")


def load_documents(path: str | Path) -> list[SyntheticDocument]:
    documents = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            documents.append(SyntheticDocument(
                doc_id=row["doc_id"],
                text=row["text"],
                timestamp=row["timestamp"],
                ground_truth=tuple(
                    GroundTruthRelation(
                        kind=RelationKind[rel["kind"]],
                        symbol=rel["symbol"],
                        value=rel["value"],
                        symbol_span=tuple(rel["symbol_span"]),
                        value_span=tuple(rel["value_span"]),
                    )
                    for rel in row["ground_truth"]
                ),
            ))
    return documents
