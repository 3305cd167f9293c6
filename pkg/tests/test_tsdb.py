"""Store lookups, consistency scoring, and label thresholding."""

import numpy as np
import pytest

from tickex.parser import ExtractionCandidate, RelationKind
from tickex.tsdb import (
    DEFAULT_TAU,
    ConsistencyScore,
    NoHistory,
    TimeSeriesStore,
    UnknownSymbol,
    consistency_score,
    label_from_score,
    lookup_reference,
)


def make_store(points) -> TimeSeriesStore:
    store = TimeSeriesStore()
    for ts, value in points:
        store.add_point("S", ts, value)
    return store


def make_candidate(kind, value, timestamp, symbol="S"):
    return ExtractionCandidate(
        doc_id="d", kind=kind, symbol=symbol, value=value,
        symbol_span=(0, 5), value_span=(10, 14), section_span=(0, 20),
        timestamp=timestamp,
    )


class TestLookup:
    def test_between_points_returns_earlier(self):
        store = make_store([(10, 5.0), (20, 5.2)])
        assert lookup_reference(store, "S", 15) == (5.0, 10)

    def test_boundary_is_inclusive(self):
        store = make_store([(10, 5.0), (20, 5.2)])
        assert lookup_reference(store, "S", 20) == (5.2, 20)

    def test_before_first_point_raises(self):
        store = make_store([(10, 5.0), (20, 5.2)])
        with pytest.raises(NoHistory):
            lookup_reference(store, "S", 5)

    def test_unknown_symbol_raises(self):
        store = make_store([(10, 5.0)])
        with pytest.raises(UnknownSymbol):
            lookup_reference(store, "X", 15)

    def test_round_trip_exact_timestamp(self):
        rng = np.random.default_rng(4)
        points = sorted((int(t), float(v)) for t, v in
                        zip(rng.choice(10_000, size=50, replace=False),
                            rng.normal(5.0, 2.0, size=50)))
        store = make_store(points)
        for ts, value in points:
            assert lookup_reference(store, "S", ts) == (value, ts)


class TestConsistencyScore:
    def test_exact_match_scores_zero(self):
        store = make_store([(10, 4.9)])
        res = consistency_score(make_candidate(RelationKind.TICK_ABS, 4.9, 15), store)
        assert res.s == 0.0
        assert res.reference_value == 4.9

    def test_small_relative_error(self):
        # hand evaluation: -((4.9 - 5.0) / 5.0)^2 = -(0.02)^2 = -4.0e-4
        store = make_store([(10, 5.0)])
        res = consistency_score(make_candidate(RelationKind.TICK_ABS, 4.9, 15), store)
        assert res.s == pytest.approx(-4.0e-4, rel=1e-12)

    def test_implausible_value_scores_far_below_tau(self):
        # hand evaluation: -((49 - 4.9) / 4.9)^2 = -(9.0)^2 = -81
        store = make_store([(10, 4.9)])
        res = consistency_score(make_candidate(RelationKind.TICK_ABS, 49.0, 15), store)
        assert res.s == pytest.approx(-81.0, rel=1e-12)
        assert res.s < DEFAULT_TAU
        assert label_from_score(res).y == 0

    def test_rel_uses_difference_of_two_latest(self):
        store = make_store([(10, 5.0), (20, 5.2)])
        res = consistency_score(make_candidate(RelationKind.TICK_REL, 0.2, 25), store)
        # delta_ref = 5.2 - 5.0; error scaled by the level 5.2
        expected = -(((0.2 - (5.2 - 5.0)) / 5.2) ** 2)
        assert res.s == pytest.approx(expected, abs=1e-30)
        assert res.reference_value == 5.2

    def test_rel_needs_two_points(self):
        store = make_store([(10, 5.0)])
        with pytest.raises(NoHistory):
            consistency_score(make_candidate(RelationKind.TICK_REL, 0.2, 15), store)

    def test_monotone_in_absolute_error(self):
        store = make_store([(10, 5.0)])
        rng = np.random.default_rng(0)
        errors = np.sort(np.abs(rng.normal(0, 3, size=200)))
        scores = [
            consistency_score(make_candidate(RelationKind.TICK_ABS, 5.0 + e, 15), store).s
            for e in errors
        ]
        assert all(a >= b for a, b in zip(scores, scores[1:]))

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            v_ref = float(rng.uniform(0.5, 100.0))
            v = v_ref * float(rng.uniform(0.5, 1.5))
            c = float(rng.uniform(0.1, 10.0))
            s1 = consistency_score(
                make_candidate(RelationKind.TICK_ABS, v, 15), make_store([(10, v_ref)])).s
            s2 = consistency_score(
                make_candidate(RelationKind.TICK_ABS, c * v, 15),
                make_store([(10, c * v_ref)])).s
            assert s2 == pytest.approx(s1, rel=1e-9)


class TestLabelFromScore:
    def test_zero_is_correct(self):
        assert label_from_score(ConsistencyScore(0.0, 5.0, 10), -0.0025).y == 1

    def test_threshold_is_inclusive(self):
        assert label_from_score(ConsistencyScore(-0.0025, 5.0, 10), -0.0025).y == 1

    def test_below_threshold(self):
        assert label_from_score(ConsistencyScore(-81.0, 4.9, 10), -0.0025).y == 0

    def test_monotone_in_score(self):
        scores = np.linspace(-1.0, 0.0, 101)
        labels = [label_from_score(ConsistencyScore(float(s), 5.0, 10)).y for s in scores]
        assert all(a <= b for a, b in zip(labels, labels[1:]))


class TestStoreCsv:
    def test_round_trip(self, tmp_path):
        store = make_store([(10, 5.0), (20, 5.2)])
        store.add_point("T", 5, -1.25)
        path = tmp_path / "store.csv"
        store.save_csv(path)
        loaded = TimeSeriesStore.load_csv(path)
        assert loaded.series == store.series

    def test_rejects_duplicate_timestamp(self):
        store = make_store([(10, 5.0)])
        with pytest.raises(ValueError):
            store.add_point("S", 10, 6.0)
