"""Historical time-series store and database-consistency scoring.

The store is the noisy supervision source: a candidate's extracted value is
compared against the most recent stored point for its symbol, producing a
consistency score ``s`` (0 = perfect agreement, more negative = worse) that
is thresholded into a binary correctness label.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from pathlib import Path

RELATIVE_ERROR_FLOOR = 1e-6
DEFAULT_TAU = -0.0025  # |relative error| <= 5%


class UnknownSymbol(KeyError):
    """Symbol has no series in the store."""


class NoHistory(LookupError):
    """No stored point at or before the requested timestamp."""


@dataclass
class TimeSeriesStore:
    """Per-symbol sorted series of (timestamp, value) points."""

    series: dict[str, list[tuple[int, float]]] = field(default_factory=dict)

    def add_point(self, symbol: str, timestamp: int, value: float) -> None:
        points = self.series.setdefault(symbol, [])
        idx = bisect.bisect_left([t for t, _ in points], timestamp)
        if idx < len(points) and points[idx][0] == timestamp:
            raise ValueError(f"duplicate timestamp {timestamp} for {symbol}")
        points.insert(idx, (timestamp, value))

    def symbols(self) -> list[str]:
        return sorted(self.series)

    def num_points(self) -> int:
        return sum(len(p) for p in self.series.values())

    def save_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["symbol", "timestamp", "value"])
            for symbol in sorted(self.series):
                for timestamp, value in self.series[symbol]:
                    writer.writerow([symbol, timestamp, repr(value)])

    @classmethod
    def load_csv(cls, path: str | Path) -> "TimeSeriesStore":
        store = cls()
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != ["symbol", "timestamp", "value"]:
                raise ValueError(f"unexpected store header: {header}")
            for symbol, timestamp, value in reader:
                store.series.setdefault(symbol, []).append((int(timestamp), float(value)))
        for points in store.series.values():
            points.sort(key=lambda p: p[0])
        return store


@dataclass(frozen=True)
class ConsistencyScore:
    s: float
    reference_value: float
    reference_timestamp: int


@dataclass(frozen=True)
class CorrectnessLabel:
    y: int


def lookup_reference(store: TimeSeriesStore, symbol: str, timestamp: int) -> tuple[float, int]:
    """Latest stored (value, timestamp) at or before ``timestamp``."""
    value, ref_ts = _lookup_latest(store, symbol, timestamp, need_previous=False)[0]
    return value, ref_ts


def _lookup_latest(
    store: TimeSeriesStore, symbol: str, timestamp: int, need_previous: bool
) -> list[tuple[float, int]]:
    points = store.series.get(symbol)
    if points is None:
        raise UnknownSymbol(symbol)
    idx = bisect.bisect_right([t for t, _ in points], timestamp)
    needed = 2 if need_previous else 1
    if idx < needed:
        raise NoHistory(f"{symbol}: fewer than {needed} points at/before {timestamp}")
    out = [(points[idx - 1][1], points[idx - 1][0])]
    if need_previous:
        out.append((points[idx - 2][1], points[idx - 2][0]))
    return out


def consistency_score(candidate, store: TimeSeriesStore) -> ConsistencyScore:
    """Negative squared relative error of the candidate value against history.

    TICK_ABS compares the value to the latest point at/before the document
    timestamp. TICK_REL compares the stated change to the difference of the
    two most recent points; the denominator stays the reference *level* so
    near-zero changes do not blow up the score.
    """
    from .parser import RelationKind  # local import to avoid a cycle

    if candidate.kind is RelationKind.TICK_ABS:
        (v_ref, ref_ts), = _lookup_latest(store, candidate.symbol, candidate.timestamp, False)
        err = (candidate.value - v_ref) / max(abs(v_ref), RELATIVE_ERROR_FLOOR)
    else:
        (v_ref, ref_ts), (v_prev, _) = _lookup_latest(
            store, candidate.symbol, candidate.timestamp, True
        )
        delta_ref = v_ref - v_prev
        err = (candidate.value - delta_ref) / max(abs(v_ref), RELATIVE_ERROR_FLOOR)
    return ConsistencyScore(s=-(err * err), reference_value=v_ref, reference_timestamp=ref_ts)


def label_from_score(score: ConsistencyScore, tau: float = DEFAULT_TAU) -> CorrectnessLabel:
    """Threshold a consistency score into a binary label (inclusive at tau)."""
    return CorrectnessLabel(y=1 if score.s >= tau else 0)
