import numpy as np
import pytest

from src import autodiff as ad
from utils.custom_exception import AutodiffError, DimensionError, PreconditionError

TOLERANCE = 1e-4


def _param(rng, *shape, name="p"):
    return ad.parameter(rng.normal(size=shape), name)


@pytest.mark.parametrize("seed", range(20))
def test_elementwise_ops_gradients(seed):
    rng = np.random.default_rng(seed)
    a = _param(rng, 3, 4)
    b = _param(rng, 4)
    c = ad.parameter(rng.uniform(0.5, 2.0, size=(3, 4)), "c")

    def fn():
        x = ad.tanh(a * b) + ad.sigmoid(a - b) / c
        y = ad.exp(-a * a) + ad.log(c) - ad.relu(a + 0.3)
        return ad.sum(x * y)

    assert ad.gradient_check(fn, [a, b, c]) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_linear_matvec_weighted_sum_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, 2, 3, 4)
    W = _param(rng, 5, 4)
    bias = _param(rng, 5)
    w = _param(rng, 5)

    def fn():
        h = ad.tanh(ad.linear(x, W, bias))
        alpha = ad.softmax(ad.matvec(h, w))
        return ad.sum(ad.weighted_sum(alpha, h) * ad.weighted_sum(alpha, h))

    assert ad.gradient_check(fn, [x, W, bias, w]) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_masked_softmax_where_and_plumbing_gradients(seed):
    rng = np.random.default_rng(seed)
    x = _param(rng, 3, 5)
    y = _param(rng, 3, 5)
    mask = np.array([[1, 1, 0, 1, 0], [1, 0, 0, 0, 0], [1, 1, 1, 1, 1]], dtype=bool)
    target = rng.normal(size=(3, 5))

    def fn():
        p = ad.softmax(x, mask=mask)
        mixed = ad.where(mask, p, y)
        rows = ad.take_rows(ad.reshape(mixed, (3, 5)), np.array([2, -1, 0, 0]))
        joined = ad.concat([rows, ad.stack([mixed[0], mixed[1]], axis=0)], axis=0)
        return ad.mean(joined * ad.Tensor(np.vstack([target, target[:3]])))

    assert ad.gradient_check(fn, [x, y]) < TOLERANCE


@pytest.mark.parametrize("seed", range(20))
def test_embedding_gradient_skips_padding_row(seed):
    rng = np.random.default_rng(seed)
    table = _param(rng, 6, 3, name="embedding")
    indices = np.array([[1, 2, 0], [5, 5, 0]])

    def fn():
        return ad.sum(ad.tanh(ad.embedding(table, indices, padding_idx=0)))

    with ad.Tape() as tape:
        loss = fn()
    tape.backward(loss)
    np.testing.assert_array_equal(table.grad[0], np.zeros(3))
    table.zero_grad()

    row_mask = np.ones((6, 1))
    row_mask[0] = 0.0
    # compare only the rows that can receive gradient
    numeric = ad.numerical_gradient(fn, table) * row_mask
    with ad.Tape() as tape:
        loss = fn()
    tape.backward(loss)
    assert ad.relative_error(table.grad, numeric) < TOLERANCE


def test_softmax_is_stable_and_masks_to_zero():
    x = ad.Tensor(np.array([[1000.0, 1001.0, 5.0]]))
    p = ad.softmax(x, mask=np.array([[True, True, False]]))
    assert np.all(np.isfinite(p.values))
    assert p.values[0, 2] == 0.0
    assert p.values.sum() == pytest.approx(1.0, abs=1e-12)


def test_softmax_all_masked_row_is_rejected():
    with pytest.raises(PreconditionError):
        ad.softmax(ad.Tensor(np.zeros((2, 3))), mask=np.array([[True, False, False], [False, False, False]]))


def test_backward_twice_raises():
    p = ad.parameter(np.ones(3))
    with ad.Tape() as tape:
        loss = ad.sum(p * p)
    tape.backward(loss)
    np.testing.assert_allclose(p.grad, 2.0 * np.ones(3))
    with pytest.raises(AutodiffError):
        tape.backward(loss)


def test_backward_needs_scalar_loss():
    p = ad.parameter(np.ones(3))
    with ad.Tape() as tape:
        out = p * 2.0
    with pytest.raises(DimensionError):
        tape.backward(out)


def test_nothing_is_recorded_outside_a_tape():
    p = ad.parameter(np.ones(2))
    out = ad.sum(p * 3.0)
    assert not out.requires_grad
    assert out.item() == pytest.approx(6.0)


def test_linear_reports_mismatched_features():
    with pytest.raises(DimensionError):
        ad.linear(ad.Tensor(np.ones((2, 3))), ad.Tensor(np.ones((4, 5))))


def test_gradients_accumulate_across_uses():
    p = ad.parameter(np.array([2.0]))
    with ad.Tape() as tape:
        loss = ad.sum(p * p + p * 3.0)
    tape.backward(loss)
    assert p.grad[0] == pytest.approx(2 * 2.0 + 3.0)


def test_relative_error_ignores_round_off_on_vanishing_gradients():
    assert ad.relative_error(np.zeros(3), np.array([2.22e-11, 0.0, -1e-12])) == 0.0
    assert ad.relative_error(np.zeros(3), np.array([1e-3, 0.0, 0.0])) == pytest.approx(1.0)
    assert ad.relative_error(np.array([1.0, 2.0]), np.array([1.0, 2.0])) == 0.0
    assert ad.relative_error(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == pytest.approx(np.sqrt(2.0) / 2.0)


def test_bias_shared_by_both_sides_of_a_difference_has_zero_gradient():
    rng = np.random.default_rng(8)
    w = _param(rng, 3, name="w")
    b = ad.parameter(np.array([0.3]), "b")
    x, y = rng.normal(size=3), rng.normal(size=3)

    def fn():
        return ad.sum(ad.tanh(ad.sum(w * x) + b - ad.sum(w * y) - b))

    with ad.Tape() as tape:
        loss = fn()
    tape.backward(loss)
    np.testing.assert_array_equal(b.grad, np.zeros(1))
    assert ad.gradient_check(fn, [w, b]) < TOLERANCE


def test_softmax_reference_values():
    np.testing.assert_allclose(ad.softmax(ad.Tensor(np.zeros(4))).values, [0.25] * 4)
    np.testing.assert_allclose(ad.softmax(ad.Tensor(np.array([1000.0, 0.0]))).values, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(ad.softmax(ad.Tensor(np.log([1.0, 3.0]))).values, [0.25, 0.75], atol=1e-12)
