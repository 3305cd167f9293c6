"""Fusion feature assembly, classification, and logistic training."""

import math

import numpy as np
import pytest

from tickex.fusion import (
    FEATURE_NAMES,
    FusionFeatures,
    FusionParams,
    classify,
    fuse_features,
    raw_features,
    standardize,
    train_fusion,
)
from tickex.network.model import EmptyDataset
from tickex.parser import ExtractionCandidate, RelationKind
from tickex.tsdb import ConsistencyScore


def cand(kind=RelationKind.TICK_ABS, gap=10):
    return ExtractionCandidate(
        doc_id="d", kind=kind, symbol="S", value=4.9,
        symbol_span=(0, 5), value_span=(5 + gap, 9 + gap),
        section_span=(0, 60), timestamp=100)


def flat_params(weights=(0, 0, 0, 0, 0), bias=0.0, threshold=0.5, s_mean=0.0, s_std=1.0):
    return FusionParams(weights=np.array(weights, dtype=np.float64), bias=bias,
                        threshold=threshold, s_mean=s_mean, s_std=s_std)


class TestFeatureAssembly:
    def test_missing_score_imputed_with_indicator(self):
        feats = fuse_features(cand(), None, s_tilde=1.5, params=flat_params(),
                              max_pair_distance=160)
        assert feats.s == 0.0
        assert feats.s_missing == 1.0

    def test_zero_case_after_symmetric_standardization(self):
        feats = fuse_features(cand(gap=0), ConsistencyScore(0.0, 4.9, 100),
                              s_tilde=0.0, params=flat_params(s_mean=0.0, s_std=1.0),
                              max_pair_distance=160)
        assert feats.vector().tolist() == [0.0, 0.0, 0.0, 0.0, 0.0]

    def test_pair_distance_normalized(self):
        # spans 80 characters apart with a 160-character window
        feats = fuse_features(cand(gap=80), ConsistencyScore(0.0, 4.9, 100),
                              s_tilde=0.0, params=flat_params(), max_pair_distance=160)
        assert feats.pair_distance == 0.5

    def test_kind_indicator(self):
        feats = fuse_features(cand(kind=RelationKind.TICK_REL),
                              ConsistencyScore(0.0, 4.9, 100), s_tilde=0.0,
                              params=flat_params(), max_pair_distance=160)
        assert feats.kind_is_rel == 1.0

    def test_standardization_uses_frozen_constants(self):
        feats = fuse_features(cand(), ConsistencyScore(-0.5, 4.9, 100), s_tilde=0.0,
                              params=flat_params(s_mean=-0.5, s_std=0.25),
                              max_pair_distance=160)
        assert feats.s == 0.0
        feats = fuse_features(cand(), ConsistencyScore(-0.25, 4.9, 100), s_tilde=0.0,
                              params=flat_params(s_mean=-0.5, s_std=0.25),
                              max_pair_distance=160)
        assert feats.s == 1.0

    def test_missing_differs_from_equal_valued_present(self):
        # the indicator carries information beyond the imputed value
        params = flat_params(weights=(0.0, 0.0, -4.0, 0.0, 0.0), bias=1.0)
        present = FusionFeatures(0.0, 0.0, 0.0, 0.0, 0.0)
        missing = FusionFeatures(0.0, 0.0, 1.0, 0.0, 0.0)
        assert classify(params, present).accept
        assert not classify(params, missing).accept


class TestClassify:
    def test_tie_rejected_strict_inequality(self):
        decision = classify(flat_params(), FusionFeatures(0, 0, 0, 0, 0))
        assert decision.p == 0.5
        assert decision.accept is False

    def test_monotone_in_positively_weighted_feature(self):
        params = flat_params(weights=(0.0, 2.0, 0.0, 0.0, 0.0), bias=-1.0)
        previous = None
        for s_tilde in np.linspace(-3, 3, 13):
            decision = classify(params, FusionFeatures(0.0, s_tilde, 0.0, 0.0, 0.0))
            if previous is not None:
                assert decision.p >= previous.p
                if previous.accept:
                    assert decision.accept
            previous = decision

    def test_large_bias_accepts_everything(self):
        params = flat_params(bias=50.0)
        rng = np.random.default_rng(0)
        for _ in range(20):
            feats = FusionFeatures(*rng.normal(size=5))
            assert classify(params, feats).accept

    def test_positive_scaling_preserves_decision(self):
        rng = np.random.default_rng(1)
        weights = rng.normal(size=5)
        bias = float(rng.normal())
        for _ in range(50):
            feats = FusionFeatures(*rng.normal(size=5))
            base = classify(flat_params(weights=weights, bias=bias), feats)
            scaled = classify(flat_params(weights=3.7 * weights, bias=3.7 * bias), feats)
            if abs(base.p - 0.5) > 1e-9:
                assert base.accept == scaled.accept


class TestTrainFusion:
    def test_separable_on_network_score(self):
        rng = np.random.default_rng(2)
        rows, labels = [], []
        for _ in range(300):
            y = int(rng.integers(0, 2))
            s_tilde = float(rng.normal(loc=2.0 if y else -2.0, scale=0.3))
            rows.append(FusionFeatures(0.0, s_tilde, 0.0, 0.0, 0.0))
            labels.append(y)
        params = train_fusion(rows, labels, learning_rate=0.5, epochs=800, l2=0.0)
        correct = sum(classify(params, f).accept == bool(y)
                      for f, y in zip(rows, labels))
        assert correct == len(rows)

    def test_all_positive_labels_accept_everything(self):
        rows = [FusionFeatures(0.0, float(v), 0.0, 0.0, 0.0)
                for v in np.linspace(-1, 1, 40)]
        params = train_fusion(rows, [1] * 40, learning_rate=0.5, epochs=500, l2=0.0)
        assert all(classify(params, f).accept for f in rows)

    def test_bias_gradient_matches_mean_residual(self):
        # hand-derived: dBCE/db = mean(p - y); with w=b=0 fixed at start,
        # one step of size eta moves b by -eta * mean(0.5 - y)
        rows = [FusionFeatures(0.0, 0.0, 0.0, 0.0, 0.0)] * 4
        labels = [1, 1, 1, 0]
        eta = 0.1
        params = train_fusion(rows, labels, learning_rate=eta, epochs=1, l2=0.0)
        assert params.bias == pytest.approx(-eta * (0.5 - np.mean(labels)))
        assert np.allclose(params.weights, 0.0)

    def test_standardization_constants_computed_from_present_rows(self):
        rows = [
            FusionFeatures(-2.0, 0.0, 0.0, 0.0, 0.0),
            FusionFeatures(-4.0, 0.0, 0.0, 0.0, 0.0),
            FusionFeatures(0.0, 0.0, 1.0, 0.0, 0.0),  # missing: excluded
        ]
        params = train_fusion(rows, [1, 0, 1], learning_rate=0.1, epochs=1, l2=0.0)
        assert params.s_mean == -3.0
        assert params.s_std == 1.0

    def test_empty_rows_rejected(self):
        with pytest.raises(EmptyDataset):
            train_fusion([], [], learning_rate=0.1, epochs=1)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        rows = [FusionFeatures(*rng.normal(size=5)) for _ in range(50)]
        labels = list(rng.integers(0, 2, size=50))
        a = train_fusion(rows, labels, learning_rate=0.3, epochs=200)
        b = train_fusion(rows, labels, learning_rate=0.3, epochs=200)
        assert np.array_equal(a.weights, b.weights)
        assert a.bias == b.bias
        assert a.final_loss == b.final_loss


class TestParamsJson:
    def test_round_trip(self, tmp_path):
        params = flat_params(weights=(1, -2, 3, -4, 0.5), bias=0.25,
                             threshold=0.6, s_mean=-0.1, s_std=2.0)
        params.final_loss = 0.123
        path = tmp_path / "fusion.json"
        params.save_json(path)
        loaded = FusionParams.load_json(path)
        assert np.array_equal(loaded.weights, params.weights)
        assert loaded.bias == params.bias
        assert loaded.threshold == params.threshold
        assert loaded.s_mean == params.s_mean
        assert loaded.s_std == params.s_std
        assert loaded.final_loss == params.final_loss

    def test_feature_name_order_enforced(self, tmp_path):
        path = tmp_path / "fusion.json"
        flat_params().save_json(path)
        content = path.read_text().replace('"s_tilde"', '"s_other"')
        path.write_text(content)
        with pytest.raises(ValueError):
            FusionParams.load_json(path)
