import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pipetrain.errors import InputError, ShapeError
from pipetrain.optim import (
    OptimState,
    PredictionContext,
    apply_update,
    momentum_step,
    predict_weights,
    sgd_step,
    update_smoothed,
    version_difference,
)


def state(v, eta=0.1, gamma=0.9):
    return OptimState(eta, gamma, [np.asarray(v, dtype=np.float64)])


def test_state_validation():
    with pytest.raises(InputError):
        state([0.0], gamma=0.0)
    with pytest.raises(InputError):
        state([0.0], gamma=1.5)
    with pytest.raises(InputError):
        state([0.0], eta=-1.0)
    assert state([0.0], gamma=1.0).gamma == 1.0


def test_default_gamma():
    assert OptimState.zeros_like([np.zeros(2)], 0.1).gamma == 0.9


def test_update_smoothed_examples():
    (v,) = update_smoothed(state([0.0]), [np.array([1.0])])
    assert v[0] == pytest.approx(0.1)
    (v,) = update_smoothed(state([0.3], gamma=1.0), [np.array([7.0])])
    assert v[0] == 0.3


def test_update_smoothed_unrolled():
    s = state([0.0, 0.0, 0.0])
    g = [np.ones(3)]
    for _ in range(3):
        s = OptimState(s.eta, s.gamma, update_smoothed(s, g))
    # v_3 = (1 - gamma) * (1 + gamma + gamma^2) = 1 - gamma^3
    np.testing.assert_allclose(s.v[0], 1 - 0.9 ** 3, rtol=0, atol=1e-15)
    np.testing.assert_allclose(s.v[0], 0.271, rtol=0, atol=1e-15)


def test_update_smoothed_shape_error():
    with pytest.raises(ShapeError):
        update_smoothed(state([0.0]), [np.zeros(2)])


def test_sgd_step_examples():
    w = [np.array([1.0])]
    new, _ = sgd_step(state([0.0], eta=0.0), w, [np.array([3.0])])
    assert new[0][0] == 1.0
    new, s = sgd_step(state([0.0], eta=0.1), w, [np.array([0.5])])
    assert new[0][0] == pytest.approx(0.95)
    assert s.v[0][0] == pytest.approx(0.05)


def test_momentum_step_uses_smoothed_gradient():
    new, s = momentum_step(state([0.2], eta=0.1), [np.array([1.0])], [np.array([1.0])])
    assert s.v[0][0] == pytest.approx(0.9 * 0.2 + 0.1)
    assert new[0][0] == pytest.approx(1.0 - 0.1 * 0.28)


def test_apply_update_rules():
    with pytest.raises(InputError):
        apply_update(state([0.0]), [np.zeros(1)], [np.zeros(1)], rule="adam")


@pytest.mark.parametrize("rule", ["sgd", "momentum"])
def test_quadratic_descent_is_monotone(rule):
    # f(w) = 0.5 * a * (w - c)^2, minimiser c
    a, c = 2.0, 3.0
    w = [np.array([-1.0])]
    s = OptimState.zeros_like(w, eta=0.2)
    losses = []
    for _ in range(10):
        losses.append(0.5 * a * (w[0][0] - c) ** 2)
        w, s = apply_update(s, w, [a * (w[0] - c)], rule)
    assert all(x > y for x, y in zip(losses, losses[1:]))
    assert abs(w[0][0] - c) < abs(-1.0 - c)


def test_version_difference_worked_example():
    assert version_difference(PredictionContext(0, 3, "forward")) == 2


@pytest.mark.parametrize("n", range(1, 9))
def test_version_difference_backward_first_device(n):
    assert version_difference(PredictionContext(0, n, "backward")) == 0


@pytest.mark.parametrize("n", range(1, 9))
def test_last_device_forward_equals_backward(n):
    f = version_difference(PredictionContext(n - 1, n, "forward"))
    b = version_difference(PredictionContext(n - 1, n, "backward"))
    assert f == b == (n - 1) // 2


def test_version_difference_bounds_by_enumeration():
    for n in range(1, 17):
        for k in range(n):
            for d in ("forward", "backward"):
                assert 0 <= version_difference(PredictionContext(k, n, d)) <= n - 1


def test_prediction_context_validation():
    with pytest.raises(InputError):
        PredictionContext(3, 3, "forward")
    with pytest.raises(InputError):
        PredictionContext(0, 3, "sideways")


def test_predict_weights_examples():
    s = state([0.5])
    w = [np.array([1.0])]
    assert predict_weights(w, s, 0)[0].tobytes() == w[0].tobytes()
    assert predict_weights(w, s, 2)[0][0] == pytest.approx(0.9)
    with pytest.raises(InputError):
        predict_weights(w, s, -1)


def test_predict_weights_recursion(rng):
    w = [rng.standard_normal(5)]
    s = OptimState(0.1, 0.9, [rng.standard_normal(5)])
    twice = predict_weights(predict_weights(w, s, 1), s, 1)
    np.testing.assert_allclose(predict_weights(w, s, 2)[0], twice[0], rtol=0, atol=1e-15)


floats = st.floats(-100, 100, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(v=floats, g=floats, gamma=st.floats(0.01, 1.0))
def test_update_is_contraction_toward_gradient(v, g, gamma):
    (new,) = update_smoothed(OptimState(0.1, gamma, [np.array([v])]), [np.array([g])])
    assert abs(new[0] - g) == pytest.approx(gamma * abs(v - g), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(w=floats, v=floats, s1=st.integers(0, 8), s2=st.integers(0, 8), eta=st.floats(0.0, 1.0))
def test_prediction_is_linear_in_s(w, v, s1, s2, eta):
    st_ = OptimState(eta, 0.9, [np.array([v])])
    W = [np.array([w])]
    lhs = predict_weights(W, st_, s1 + s2)[0] - w
    rhs = (predict_weights(W, st_, s1)[0] - w) + (predict_weights(W, st_, s2)[0] - w)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)


def test_prediction_error_vanishes_under_constant_gradient():
    g = np.array([0.7, -1.3])
    w = [np.zeros(2)]
    s = OptimState.zeros_like(w, eta=0.05)
    history, smoothed = [w[0]], [s.v[0]]
    for _ in range(300):
        w, s = momentum_step(s, w, [g])
        history.append(w[0])
        smoothed.append(s.v[0])
    shift = 3

    def err(t):
        pred = history[t] - shift * 0.05 * smoothed[t]
        return float(np.linalg.norm(pred - history[t + shift]))

    assert err(5) > 1e-3
    assert err(290) < 1e-12
    assert err(200) < err(50) < err(5)
