import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tiersim.dynamics import (DisturbanceModel, apply_disturbance, bicycle_model,
                              bicycle_step, bicycle_state, bicycle_input, predict,
                              slip_from_steering)


def test_zero_speed_zero_input_is_fixed_point():
    x = bicycle_state(0, 0, 0, 0)
    out = bicycle_step(x, bicycle_input(0, 0), 0.01, 0.5)
    np.testing.assert_array_equal(out, x)


def test_pure_forward_motion():
    out = bicycle_step(bicycle_state(0, 0, 0, 1), bicycle_input(0, 0), 0.01, 0.5)
    np.testing.assert_allclose(out, [0.01, 0, 0, 1], atol=1e-15)


def test_full_slip_turns_and_moves_sideways():
    out = bicycle_step(bicycle_state(0, 0, 0, 1),
                       bicycle_input(math.pi / 2, 0), 0.01, 0.5)
    np.testing.assert_allclose(out, [0, 0.01, 0.02, 1], atol=1e-15)


def test_non_finite_state_rejected():
    with pytest.raises(ValueError, match="non-finite state"):
        bicycle_step(np.array([np.nan, 0, 0, 0]), bicycle_input(0, 0), 0.01, 0.5)


def test_bad_geometry_rejected():
    with pytest.raises(ValueError):
        bicycle_step(bicycle_state(0, 0, 0, 0), bicycle_input(0, 0), -0.01, 0.5)
    with pytest.raises(ValueError):
        bicycle_step(bicycle_state(0, 0, 0, 0), bicycle_input(0, 0), 0.01, 0.0)


def test_slip_from_steering_range():
    for delta in np.linspace(-1.5, 1.5, 31):
        slip = slip_from_steering(delta, 0.5, 0.5)
        assert -math.pi / 2 < slip < math.pi / 2


def test_apply_disturbance():
    x = np.array([1.0, 2.0, 0.0, 1.0])
    np.testing.assert_array_equal(apply_disturbance(x, np.zeros(4)), x)
    np.testing.assert_allclose(
        apply_disturbance(x, np.array([0.1, -0.1, 0, 0])), [1.1, 1.9, 0, 1])
    with pytest.raises(ValueError, match="dimension mismatch"):
        apply_disturbance(x, np.zeros(3))


def test_uniform_disturbance_respects_bounds():
    bounds = np.array([0.5, 0.5, 0.1, 0.1])
    dist = DisturbanceModel(kind="uniform", bounds=bounds)
    rng = np.random.default_rng(7)
    samples = np.array([dist.sample(rng) for _ in range(10 ** 5)])
    assert np.all(np.abs(samples) <= bounds)
    # each component actually explores its range
    assert np.all(samples.max(axis=0) > 0.9 * bounds)


def test_disturbance_none_is_zero():
    dist = DisturbanceModel(kind="none", bounds=np.ones(4))
    rng = np.random.default_rng(0)
    np.testing.assert_array_equal(dist.sample(rng), np.zeros(4))


def test_one_step_deviation_bounded(model):
    bounds = np.array([0.5, 0.5, 0.1, 0.1])
    dist = DisturbanceModel(kind="uniform", bounds=bounds)
    rng = np.random.default_rng(3)
    for _ in range(200):
        x = rng.uniform(-5, 5, 4)
        u = rng.uniform(-1, 1, 2)
        w = dist.sample(rng)
        dev = np.linalg.norm(model.step(x, u, w) - model.nominal_step(x, u))
        assert dev <= np.linalg.norm(bounds) + 1e-12


def test_predict_base_case(model):
    x = bicycle_state(1, 2, 0.3, 1.5)
    inputs = np.zeros((5, 2))
    np.testing.assert_array_equal(predict(model, x, inputs, 0), x)


def test_predict_unrolls_recursion(model):
    rng = np.random.default_rng(11)
    x = rng.normal(size=4)
    inputs = rng.normal(scale=0.3, size=(8, 2))
    for i in range(8):
        lhs = predict(model, x, inputs, i + 1)
        rhs = model.nominal_step(predict(model, x, inputs, i), inputs[i])
        np.testing.assert_array_equal(lhs, rhs)


def test_predict_horizon_exceeded(model):
    with pytest.raises(ValueError, match="horizon exceeded"):
        predict(model, bicycle_state(0, 0, 0, 0), np.zeros((3, 2)), 4)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 12), st.integers(0, 12), st.integers(0, 10 ** 6))
def test_predict_two_stage_composition(a, d, seed):
    """Predicting a steps, then d more from the remaining inputs, equals a
    single (a+d)-step prediction."""
    model = bicycle_model(0.01, 0.5)
    rng = np.random.default_rng(seed)
    x = rng.normal(scale=2.0, size=4)
    inputs = rng.normal(scale=0.4, size=(25, 2))
    mid = predict(model, x, inputs, a)
    two_stage = predict(model, mid, inputs[a:], d)
    one_stage = predict(model, x, inputs, a + d)
    np.testing.assert_allclose(two_stage, one_stage, rtol=1e-12, atol=1e-12)


def test_deterministic_trajectories(model):
    rng1 = np.random.default_rng(42)
    rng2 = np.random.default_rng(42)
    dist = DisturbanceModel(kind="uniform", bounds=np.array([0.5, 0.5, 0.1, 0.1]))
    x1 = np.array([0.0, 0.0, 0.0, 1.0])
    x2 = x1.copy()
    u = np.array([0.05, 0.2])
    for _ in range(50):
        x1 = model.step(x1, u, dist.sample(rng1))
        x2 = model.step(x2, u, dist.sample(rng2))
    np.testing.assert_array_equal(x1, x2)
