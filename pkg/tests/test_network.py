"""Forward/backward correctness, training behavior, and checkpoint IO.

The LSTM forward is checked against a test-local straight-line
re-implementation of the gate recurrence, and every analytic gradient against
central finite differences.
"""

import math

import numpy as np
import pytest

from tickex.encoder import CHAR_DIM, EncodedCandidate
from tickex.network import (
    DimensionMismatch,
    EmptyDataset,
    LstmParams,
    TrainConfig,
    backward,
    baseline_forward,
    baseline_train,
    bce_loss,
    init_baseline,
    init_network,
    load_baseline,
    load_network,
    lstm_forward,
    network_forward,
    network_score,
    save_baseline,
    save_network,
    train,
)
from tickex.network.model import backward_batch, batch_loss, forward_batch, pack_batch


def reference_lstm(w_z, bias, xs):
    """Independent straight-line evaluation of the five recurrence steps."""
    hidden = w_z.shape[0] // 4
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    for x in xs:
        z = w_z @ np.concatenate([x, h]) + bias
        i = 1.0 / (1.0 + np.exp(-z[0:hidden]))
        f = 1.0 / (1.0 + np.exp(-z[hidden:2 * hidden]))
        o = 1.0 / (1.0 + np.exp(-z[2 * hidden:3 * hidden]))
        g = np.tanh(z[3 * hidden:4 * hidden])
        c = f * c + i * g
        h = o * np.tanh(c)
    return h


class TestLstmForward:
    def test_zero_parameters_give_zero_state(self):
        params = LstmParams(w_z=np.zeros((16, 10)), bias=np.zeros(16))
        rng = np.random.default_rng(0)
        h, _ = lstm_forward(params, rng.standard_normal((9, 6)))
        assert np.array_equal(h, np.zeros(4))

    def test_forget_bias_only_is_length_invariant(self):
        # no input coupling: h_T identical for length 1 and length 7
        bias = np.zeros(16)
        bias[4:8] = 1.0
        params = LstmParams(w_z=np.zeros((16, 10)), bias=bias)
        x = np.ones((1, 6))
        h1, _ = lstm_forward(params, x)
        h7, _ = lstm_forward(params, np.repeat(x, 7, axis=0))
        np.testing.assert_allclose(h1, h7, atol=1e-15)

    def test_matches_straight_line_reference(self):
        rng = np.random.default_rng(0)
        hidden, dim, steps = 4, 6, 5
        w_z = rng.standard_normal((4 * hidden, dim + hidden))
        bias = rng.standard_normal(4 * hidden)
        xs = rng.standard_normal((steps, dim))
        h, _ = lstm_forward(LstmParams(w_z=w_z, bias=bias), xs)
        np.testing.assert_allclose(h, reference_lstm(w_z, bias, xs), atol=1e-12)

    def test_dimension_mismatch(self):
        params = LstmParams(w_z=np.zeros((16, 10)), bias=np.zeros(16))
        with pytest.raises(DimensionMismatch):
            lstm_forward(params, np.zeros((5, 7)))


class TestNetworkForward:
    def make_enc(self, seed=0, length=12):
        rng = np.random.default_rng(seed)
        return EncodedCandidate(
            candidate_id=f"c{seed}",
            char_idx=rng.integers(0, 95, size=length).astype(np.uint8),
            flags=rng.integers(0, 2, size=(length, 7)).astype(np.uint8),
            g=rng.integers(0, 2, size=64).astype(np.uint8),
        )

    def test_zero_head_scores_one_half(self):
        params = init_network(CHAR_DIM, 64, hidden_size=8, global_fc_dim=4, seed=0)
        params.head.weight[:] = 0.0
        params.head.bias[:] = 0.0
        for seed in range(4):
            score = network_forward(params, self.make_enc(seed))
            assert score.y_tilde == 0.5
            assert score.s_tilde == 0.0

    def test_logit_identity(self):
        assert math.isclose(math.log(9.0), 2.1972245773362196)
        params = init_network(CHAR_DIM, 64, hidden_size=8, global_fc_dim=4, seed=1)
        score = network_forward(params, self.make_enc(1))
        assert score.s_tilde == pytest.approx(math.log(score.y_tilde / (1 - score.y_tilde)))
        assert 1.0 / (1.0 + math.exp(-score.s_tilde)) == pytest.approx(score.y_tilde, abs=1e-9)

    def test_head_bias_monotone_in_y(self):
        params = init_network(CHAR_DIM, 64, hidden_size=8, global_fc_dim=4, seed=2)
        enc = self.make_enc(2)
        previous = None
        for bias in (-1.0, 0.0, 1.0, 2.0):
            params.head.bias[:] = bias
            y = network_forward(params, enc).y_tilde
            if previous is not None:
                assert y > previous
            previous = y

    def test_scoring_order_invariant(self):
        params = init_network(CHAR_DIM, 64, hidden_size=8, global_fc_dim=4, seed=3)
        encs = [self.make_enc(seed, length=8 + seed) for seed in range(7)]
        forward = {e.candidate_id: network_forward(params, e).y_tilde for e in encs}
        batched = {e.candidate_id: s.y_tilde
                   for e, s in zip(encs, network_score(params, encs, batch_size=3))}
        reversed_batched = {e.candidate_id: s.y_tilde
                            for e, s in zip(encs[::-1],
                                            network_score(params, encs[::-1], batch_size=3))}
        for cid in forward:
            assert batched[cid] == pytest.approx(forward[cid], abs=1e-12)
            assert reversed_batched[cid] == pytest.approx(forward[cid], abs=1e-12)


class TestBce:
    def test_half_prediction(self):
        assert bce_loss(0.5, 1) == pytest.approx(math.log(2.0))

    def test_perfect_prediction_clamped(self):
        assert bce_loss(1.0, 1) == pytest.approx(0.0, abs=1e-6)
        assert bce_loss(0.0, 0) == pytest.approx(0.0, abs=1e-6)

    def test_batch_mean_symmetry(self):
        assert bce_loss([0.5, 0.5], [1, 0]) == pytest.approx(math.log(2.0))

    def test_nonnegative(self):
        rng = np.random.default_rng(0)
        preds = rng.uniform(0.001, 0.999, size=100)
        labels = rng.integers(0, 2, size=100)
        assert bce_loss(preds, labels) >= 0.0


def synthetic_batch(seed=0, dim=16, hidden=8, gdim=32, kdim=8, steps=20, batch=4):
    rng = np.random.default_rng(seed)
    params = init_network(dim, gdim, hidden_size=hidden, global_fc_dim=kdim, seed=seed)
    x = rng.standard_normal((steps, batch, dim))
    lengths = rng.integers(max(2, steps // 3), steps + 1, size=batch).astype(np.int64)
    lengths[0] = steps
    gmat = rng.standard_normal((batch, gdim))
    labels = rng.integers(0, 2, size=batch).astype(np.float64)
    return params, x, lengths, gmat, labels


class TestGradients:
    def test_zero_gradient_at_perfect_predictions(self):
        params, x, lengths, gmat, labels = synthetic_batch(seed=5)
        cache = forward_batch(params, x, lengths, gmat)
        grads = backward_batch(params, cache, cache.y_tilde.copy())
        assert abs(grads["head.bias"][0]) < 1e-12

    def test_head_bias_gradient_is_mean_residual(self):
        # sigmoid-BCE shortcut: dL/db = mean(y_tilde - y)
        params, x, lengths, gmat, labels = synthetic_batch(seed=6)
        cache = forward_batch(params, x, lengths, gmat)
        grads = backward_batch(params, cache, labels)
        assert grads["head.bias"][0] == pytest.approx(
            float(np.mean(cache.y_tilde - labels)), rel=1e-12)

    def test_finite_difference_check_every_tensor(self):
        params, x, lengths, gmat, labels = synthetic_batch(seed=7)
        cache = forward_batch(params, x, lengths, gmat)
        grads = backward_batch(params, cache, labels)

        def loss():
            return batch_loss(forward_batch(params, x, lengths, gmat), labels)

        rng = np.random.default_rng(7)
        step = 1e-5
        for name, tensor in params.tensors().items():
            flat = tensor.reshape(-1)
            grad_flat = grads[name].reshape(-1)
            count = min(40, flat.size)
            for idx in rng.choice(flat.size, size=count, replace=False):
                original = flat[idx]
                flat[idx] = original + step
                up = loss()
                flat[idx] = original - step
                down = loss()
                flat[idx] = original
                fd = (up - down) / (2 * step)
                denom = max(abs(fd), abs(grad_flat[idx]), 1e-8)
                assert abs(fd - grad_flat[idx]) / denom < 1e-4, (name, idx)

    def test_backward_public_op(self):
        rng = np.random.default_rng(8)
        encs = [
            EncodedCandidate(
                candidate_id=f"c{k}",
                char_idx=rng.integers(0, 95, size=10).astype(np.uint8),
                flags=rng.integers(0, 2, size=(10, 7)).astype(np.uint8),
                g=rng.integers(0, 2, size=32).astype(np.uint8),
                label=int(rng.integers(0, 2)),
            )
            for k in range(4)
        ]
        params = init_network(CHAR_DIM, 32, hidden_size=8, global_fc_dim=4, seed=8)
        grads = backward(params, encs)
        assert set(grads) == set(params.tensors())
        with pytest.raises(EmptyDataset):
            backward(params, [])


def separable_dataset(n=200, gdim=32, seed=0):
    """Label readable from a candidate-role indicator position."""
    rng = np.random.default_rng(seed)
    records = []
    for k in range(n):
        label = int(rng.integers(0, 2))
        length = int(rng.integers(8, 16))
        flags = np.zeros((length, 7), dtype=np.uint8)
        flags[:, 5] = label  # candidate-symbol role bit carries the label
        records.append(EncodedCandidate(
            candidate_id=f"r{k}",
            char_idx=rng.integers(0, 95, size=length).astype(np.uint8),
            flags=flags,
            g=rng.integers(0, 2, size=gdim).astype(np.uint8),
            label=label,
        ))
    return records


class TestTraining:
    def test_separable_data_reaches_low_loss(self):
        records = separable_dataset()
        params = init_network(CHAR_DIM, 32, hidden_size=8, global_fc_dim=4, seed=0)
        cfg = TrainConfig(learning_rate=3e-3, batch_size=32, epochs=50, seed=0,
                          validation_fraction=0.0)
        trained, history = train(params, records, cfg)
        assert min(h.train_loss for h in history) < 0.1

    def test_zero_learning_rate_leaves_parameters_unchanged(self):
        records = separable_dataset(n=40)
        params = init_network(CHAR_DIM, 32, hidden_size=8, global_fc_dim=4, seed=1)
        before = {k: v.copy() for k, v in params.tensors().items()}
        trained, history = train(params, records,
                                 TrainConfig(learning_rate=0.0, epochs=3, seed=1))
        for key, tensor in trained.tensors().items():
            assert np.array_equal(tensor, before[key])
        losses = [h.train_loss for h in history]
        assert max(losses) - min(losses) < 1e-12

    def test_same_seed_reproduces_history_bitwise(self):
        records = separable_dataset(n=60)
        histories = []
        for _ in range(2):
            params = init_network(CHAR_DIM, 32, hidden_size=8, global_fc_dim=4, seed=2)
            _, history = train(params, records,
                               TrainConfig(epochs=4, seed=2, learning_rate=1e-3))
            histories.append([(h.train_loss, h.val_loss) for h in history])
        assert histories[0] == histories[1]

    def test_empty_dataset_rejected(self):
        params = init_network(CHAR_DIM, 32, hidden_size=8, global_fc_dim=4, seed=0)
        with pytest.raises(EmptyDataset):
            train(params, [], TrainConfig(epochs=1))

    def test_forget_gate_bias_initialized_to_one(self):
        params = init_network(CHAR_DIM, 32, hidden_size=8, global_fc_dim=4, seed=0)
        hidden = params.hidden_size
        assert np.all(params.lstm.bias[hidden:2 * hidden] == 1.0)
        assert np.all(params.lstm.bias[:hidden] == 0.0)


class TestBaselineModel:
    def test_zero_weights_score_one_half(self):
        params = init_baseline(16, hidden_dim=8, seed=0)
        params.w1[:] = 0.0
        params.w2[:] = 0.0
        rng = np.random.default_rng(0)
        preds = baseline_forward(params, rng.standard_normal((5, 16)))
        np.testing.assert_allclose(preds, 0.5)

    def test_separable_features_reach_low_loss(self):
        rng = np.random.default_rng(3)
        labels = rng.integers(0, 2, size=200).astype(np.float64)
        features = rng.integers(0, 2, size=(200, 32)).astype(np.float64)
        features[:, 0] = labels
        cfg = TrainConfig(learning_rate=1e-2, batch_size=32, epochs=50, seed=3,
                          validation_fraction=0.0)
        params, history = baseline_train(features, labels, cfg, hidden_dim=16)
        assert min(h.train_loss for h in history) < 0.1

    def test_dimension_mismatch(self):
        params = init_baseline(16, hidden_dim=8, seed=0)
        with pytest.raises(DimensionMismatch):
            baseline_forward(params, np.zeros((3, 9)))


class TestCheckpoint:
    def test_network_round_trip_byte_identical(self, tmp_path):
        params = init_network(CHAR_DIM, 64, hidden_size=16, global_fc_dim=8, seed=9)
        path_a = tmp_path / "a.ckpt"
        path_b = tmp_path / "b.ckpt"
        save_network(path_a, params, {"note": "x"})
        save_network(path_b, params, {"note": "x"})
        assert path_a.read_bytes() == path_b.read_bytes()
        loaded = load_network(path_a)
        for key, tensor in params.tensors().items():
            assert np.array_equal(loaded.tensors()[key], tensor)

    def test_baseline_round_trip(self, tmp_path):
        params = init_baseline(24, hidden_dim=8, seed=4)
        path = tmp_path / "b.ckpt"
        save_baseline(path, params, {})
        loaded = load_baseline(path)
        for key, tensor in params.tensors().items():
            assert np.array_equal(loaded.tensors()[key], tensor)

    def test_kind_mismatch_rejected(self, tmp_path):
        params = init_baseline(24, hidden_dim=8, seed=4)
        path = tmp_path / "b.ckpt"
        save_baseline(path, params, {})
        with pytest.raises(ValueError):
            load_network(path)


class TestKernelPaths:
    def test_numpy_and_numba_agree(self, monkeypatch):
        from tickex.network import kernels

        rng = np.random.default_rng(11)
        dim, hidden, steps, batch = 12, 6, 15, 5
        w_xT = np.ascontiguousarray(rng.standard_normal((dim, 4 * hidden)))
        w_h = np.ascontiguousarray(rng.standard_normal((4 * hidden, hidden)))
        w_hT = np.ascontiguousarray(w_h.T)
        bias = rng.standard_normal(4 * hidden)
        x = rng.standard_normal((steps, batch, dim))
        lengths = rng.integers(3, steps + 1, size=batch).astype(np.int64)
        dh = rng.standard_normal((batch, hidden))

        results = {}
        for flag in ("0", "1"):
            monkeypatch.setenv("TICKEX_USE_NUMBA", flag)
            if flag == "1" and not kernels.HAS_NUMBA:
                pytest.skip("numba unavailable")
            hs, cs, gates = kernels.lstm_forward_kernel(w_xT, w_hT, bias, x, lengths)
            grads = kernels.lstm_backward_kernel(w_h, x, lengths, hs, cs, gates, dh)
            results[flag] = (hs, cs, gates, *grads)
        for a, b in zip(results["0"], results["1"]):
            np.testing.assert_allclose(a, b, atol=1e-12)
