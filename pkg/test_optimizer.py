import numpy as np
import pytest

from src import autodiff as ad
from src.optimizer import Adam, AdamState, adam_update
from utils.custom_exception import OptimizationError


def test_first_step_moves_by_learning_rate_against_gradient_sign():
    p = ad.parameter(np.array([1.0, -2.0, 3.0]), "p")
    state = AdamState(learning_rate=0.1)
    adam_update(state, {"p": p}, {"p": np.array([0.5, -4.0, 0.0])})
    # bias-corrected first step is lr * g / (|g| + eps)
    np.testing.assert_allclose(p.values, [0.9, -1.9, 3.0], atol=1e-7)
    assert state.step == 1


def test_matches_reference_recurrence_over_several_steps():
    rng = np.random.default_rng(0)
    p = ad.parameter(rng.normal(size=4), "p")
    expected = p.values.copy()
    m = np.zeros(4)
    v = np.zeros(4)
    state = AdamState(learning_rate=0.01)
    for t in range(1, 6):
        g = rng.normal(size=4)
        m = 0.9 * m + 0.1 * g
        v = 0.999 * v + 0.001 * g * g
        expected -= 0.01 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        adam_update(state, {"p": p}, {"p": g})
    np.testing.assert_allclose(p.values, expected, rtol=1e-12, atol=1e-12)


def test_missing_gradient_names_the_parameter():
    p = ad.parameter(np.ones(2), "dap.W")
    with pytest.raises(OptimizationError, match="dap.W"):
        adam_update(AdamState(), {"dap.W": p}, {})


def test_optimizer_minimizes_a_quadratic():
    p = ad.parameter(np.array([3.0, -2.0]), "p")
    opt = Adam({"p": p}, learning_rate=0.1)
    for _ in range(300):
        opt.zero_grad()
        with ad.Tape() as tape:
            loss = ad.sum((p - 1.0) * (p - 1.0))
        tape.backward(loss)
        opt.step()
    np.testing.assert_allclose(p.values, [1.0, 1.0], atol=5e-2)


def test_only_registered_parameters_change():
    a = ad.parameter(np.ones(2), "a")
    b = ad.parameter(np.ones(2), "b")
    opt = Adam({"a": a}, learning_rate=0.1)
    with ad.Tape() as tape:
        loss = ad.sum(a * b)
    tape.backward(loss)
    opt.step()
    np.testing.assert_array_equal(b.values, np.ones(2))
    assert not np.allclose(a.values, np.ones(2))


def test_square_objective_shrinks_towards_zero():
    w = ad.parameter(np.array([1.0]), "w")
    state = AdamState(learning_rate=0.05)
    for _ in range(100):
        adam_update(state, {"w": w}, {"w": 2.0 * w.values})
    assert abs(w.values[0]) < 0.5


def test_zero_gradient_leaves_parameters_unchanged():
    p = ad.parameter(np.array([0.3, -1.2]), "p")
    state = AdamState(learning_rate=0.1)
    for _ in range(3):
        adam_update(state, {"p": p}, {"p": np.zeros(2)})
    np.testing.assert_array_equal(p.values, [0.3, -1.2])
