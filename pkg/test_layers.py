import numpy as np
import pytest

from src import autodiff as ad
from src.layers import AttentionParams, LstmCellParams, attend, attention, bilstm, dropout, lstm_step, run_lstm
from utils.custom_exception import ConfigurationError, DimensionError, PreconditionError

TOLERANCE = 1e-4


def _sequence(rng, steps, batch, features):
    return [ad.parameter(rng.normal(size=(batch, features)), f"x{t}") for t in range(steps)]


def test_lstm_step_matches_gate_equations():
    rng = np.random.default_rng(0)
    cell = LstmCellParams.init(3, 2, rng)
    e, h, c = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)

    def gate(name):
        W_i, W_h = getattr(cell, f"W_i{name}").values, getattr(cell, f"W_h{name}").values
        b_i, b_h = getattr(cell, f"b_i{name}").values, getattr(cell, f"b_h{name}").values
        return W_i @ e + b_i + W_h @ h + b_h

    def sigmoid(z):
        return 1.0 / (1.0 + np.exp(-z))

    c_expected = sigmoid(gate("f")) * c + sigmoid(gate("i")) * np.tanh(gate("g"))
    h_expected = sigmoid(gate("o")) * np.tanh(c_expected)
    h_t, c_t = lstm_step(cell, ad.Tensor(e), ad.Tensor(h), ad.Tensor(c))
    np.testing.assert_allclose(c_t.values, c_expected, atol=1e-12)
    np.testing.assert_allclose(h_t.values, h_expected, atol=1e-12)


def test_lstm_step_rejects_wrong_input_size():
    cell = LstmCellParams.init(3, 2, np.random.default_rng(0), prefix="utt_lstm.forward")
    with pytest.raises(DimensionError, match="utt_lstm.forward.W_ii"):
        lstm_step(cell, ad.Tensor(np.ones(4)), ad.Tensor(np.zeros(2)), ad.Tensor(np.zeros(2)))


def test_parameter_count():
    cell = LstmCellParams.init(5, 3, np.random.default_rng(0))
    assert cell.parameter_count() == 4 * (5 * 3 + 3 * 3 + 2 * 3)


@pytest.mark.parametrize("seed", range(20))
def test_bilstm_gradients_with_masking(seed):
    rng = np.random.default_rng(seed)
    forward = LstmCellParams.init(3, 2, rng, "fw")
    backward = LstmCellParams.init(3, 2, rng, "bw")
    seq = _sequence(rng, 4, 2, 3)
    mask = [np.array([True, True]), np.array([True, True]), np.array([True, False]), np.array([True, False])]
    weights = rng.normal(size=(4, 2, 4))

    def fn():
        states = bilstm(forward, backward, seq, mask)
        return ad.sum(ad.stack(states, axis=0) * ad.Tensor(weights))

    params = [t for _, t in forward.named_parameters()] + [t for _, t in backward.named_parameters()] + seq
    assert ad.gradient_check(fn, params) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_attention_gradients(seed):
    rng = np.random.default_rng(seed)
    att = AttentionParams.init(4, rng)
    xs = _sequence(rng, 3, 2, 4)
    mask = [np.array([True, True]), np.array([True, False]), np.array([False, True])]
    target = rng.normal(size=(2, 4))

    def fn():
        return ad.sum(attention(att, xs, mask) * ad.Tensor(target))

    assert ad.gradient_check(fn, [att.W] + xs) < TOLERANCE


def test_masked_steps_carry_state():
    rng = np.random.default_rng(3)
    cell = LstmCellParams.init(2, 3, rng)
    seq = [ad.Tensor(rng.normal(size=(2, 2))) for _ in range(3)]
    out = run_lstm(cell, seq, [True, np.array([True, False]), np.array([True, False])])
    np.testing.assert_array_equal(out[2].values[1], out[0].values[1])
    assert not np.allclose(out[2].values[0], out[0].values[0])


def test_padding_does_not_change_real_states():
    rng = np.random.default_rng(4)
    fw, bw = LstmCellParams.init(2, 3, rng), LstmCellParams.init(2, 3, rng)
    seq = [ad.Tensor(rng.normal(size=2)) for _ in range(2)]
    padded = seq + [ad.Tensor(rng.normal(size=2))]
    short = bilstm(fw, bw, seq, [True, True])
    long = bilstm(fw, bw, padded, [True, True, False])
    for a, b in zip(short, long):
        np.testing.assert_allclose(a.values, b.values, atol=1e-12)


def test_bilstm_empty_sequence():
    rng = np.random.default_rng(0)
    with pytest.raises(PreconditionError):
        bilstm(LstmCellParams.init(2, 2, rng), LstmCellParams.init(2, 2, rng), [], [])


def test_attention_weights_sum_to_one_and_ignore_masked():
    rng = np.random.default_rng(5)
    att = AttentionParams.init(3, rng)
    xs = [ad.Tensor(rng.normal(size=3)) for _ in range(4)]
    _, alpha = attend(att, xs, [True, True, False, True])
    assert alpha.values.sum() == pytest.approx(1.0, abs=1e-12)
    assert alpha.values[2] == 0.0


def test_attention_single_position_gets_full_weight():
    rng = np.random.default_rng(6)
    att = AttentionParams.init(3, rng)
    x = ad.Tensor(rng.normal(size=3))
    o, alpha = attend(att, [x], [True])
    assert alpha.values[0] == pytest.approx(1.0)
    np.testing.assert_allclose(o.values, x.values)


def test_attention_all_masked():
    att = AttentionParams.init(2, np.random.default_rng(0))
    with pytest.raises(PreconditionError):
        attend(att, [ad.Tensor(np.ones(2))], [False])


def test_dropout_identity_at_eval_and_scaled_in_training():
    x = ad.Tensor(np.ones(10000))
    assert dropout(x, 0.5, training=False, rng=None) is x
    out = dropout(x, 0.5, training=True, rng=np.random.default_rng(0)).values
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert out.mean() == pytest.approx(1.0, abs=0.05)


def test_dropout_probability_range():
    with pytest.raises(ConfigurationError):
        dropout(ad.Tensor(np.ones(3)), 1.0, training=True, rng=np.random.default_rng(0))


def test_lstm_step_with_zero_parameters():
    cell = LstmCellParams.init(3, 2, np.random.default_rng(0))
    for _, tensor in cell.named_parameters():
        tensor.values[...] = 0.0
    e = ad.Tensor(np.random.default_rng(1).normal(size=3))
    h_t, c_t = lstm_step(cell, e, ad.Tensor(np.zeros(2)), ad.Tensor(np.zeros(2)))
    np.testing.assert_array_equal(h_t.values, np.zeros(2))
    np.testing.assert_array_equal(c_t.values, np.zeros(2))

    # every gate is 0.5 and the candidate is 0, so only half the old cell survives
    c_prev = np.array([1.0, -2.0])
    h_t, c_t = lstm_step(cell, e, ad.Tensor(np.zeros(2)), ad.Tensor(c_prev))
    np.testing.assert_allclose(c_t.values, 0.5 * c_prev)
    np.testing.assert_allclose(h_t.values, 0.5 * np.tanh(0.5 * c_prev))


def test_bilstm_single_step_runs_both_directions_on_the_same_input():
    rng = np.random.default_rng(2)
    fw, bw = LstmCellParams.init(3, 2, rng), LstmCellParams.init(3, 2, rng)
    x = ad.Tensor(rng.normal(size=3))
    zero = ad.Tensor(np.zeros(2))
    out = bilstm(fw, bw, [x], [True])
    np.testing.assert_allclose(out[0].values[:2], lstm_step(fw, x, zero, zero)[0].values)
    np.testing.assert_allclose(out[0].values[2:], lstm_step(bw, x, zero, zero)[0].values)


def test_bilstm_with_tied_directions_mirrors_under_reversal():
    rng = np.random.default_rng(7)
    cell = LstmCellParams.init(3, 2, rng)
    seq = [ad.Tensor(rng.normal(size=3)) for _ in range(5)]
    mask = [True] * 5
    original = bilstm(cell, cell, seq, mask)
    reversed_out = bilstm(cell, cell, seq[::-1], mask)
    for t in range(5):
        np.testing.assert_allclose(reversed_out[t].values[:2], original[4 - t].values[2:], atol=1e-12)
        np.testing.assert_allclose(reversed_out[t].values[2:], original[4 - t].values[:2], atol=1e-12)


def test_zero_attention_weights_average_the_unmasked_positions():
    att = AttentionParams(W=ad.parameter(np.zeros(3), "W"))
    rng = np.random.default_rng(8)
    xs = [ad.Tensor(rng.normal(size=3)) for _ in range(4)]
    o, alpha = attend(att, xs, [True, False, True, True])
    np.testing.assert_allclose(alpha.values, [1 / 3, 0.0, 1 / 3, 1 / 3])
    np.testing.assert_allclose(o.values, np.mean([xs[k].values for k in (0, 2, 3)], axis=0))


def test_attention_weights_follow_hand_computed_softmax():
    att = AttentionParams(W=ad.parameter(np.array([1.0, 0.0]), "W"))
    xs = [ad.Tensor(np.array([np.log(1.0), 5.0])), ad.Tensor(np.array([np.log(3.0), -5.0]))]
    _, alpha = attend(att, xs, [True, True])
    np.testing.assert_allclose(alpha.values, [0.25, 0.75], atol=1e-12)
