"""Tests for the AdamW step."""

import numpy as np
import pytest
import torch

from app.utils.errors import DivergenceError, ShapeError
from ml.core.numerics import GradientRecord
from ml.training.optim import OptimizerConfig, OptimizerState, step


def _state(**overrides) -> OptimizerState:
    return OptimizerState.from_config(OptimizerConfig(**overrides))


def test_first_step_hand_computed():
    """p=1, g=0.5, lr=0.1, wd=0: m̂=0.5, v̂=0.25, p ← 1 − 0.1·0.5/(0.5+1e-8)."""
    state = _state(lr=0.1, weight_decay=0.0)
    params, state = step(state, {"p": np.array([1.0])}, GradientRecord(p=np.array([0.5])))
    assert params["p"][0] == pytest.approx(0.900000002, rel=1e-12)
    assert state.k == 1
    assert state.m["p"][0] == pytest.approx(0.05)
    assert state.v["p"][0] == pytest.approx(0.00025)


def test_matches_torch_adamw():
    rng = np.random.default_rng(0)
    init = rng.standard_normal(5)
    grads = rng.standard_normal((50, 5))

    state = _state(lr=0.01, weight_decay=0.05)
    params = {"w": init.copy()}
    for g in grads:
        params, state = step(state, params, GradientRecord(w=g))

    w = torch.tensor(init.copy(), requires_grad=True)
    opt = torch.optim.AdamW([w], lr=0.01, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.05)
    for g in grads:
        opt.zero_grad()
        w.grad = torch.tensor(g)
        opt.step()
    np.testing.assert_allclose(params["w"], w.detach().numpy(), rtol=1e-10, atol=1e-12)


def test_quadratic_converges():
    a = np.array([1.0, -2.0, 0.5])
    state = _state(lr=1e-2, weight_decay=0.0)
    params = {"x": np.zeros(3)}
    for _ in range(2000):
        params, state = step(state, params, GradientRecord(x=2.0 * (params["x"] - a)))
    assert np.sum((params["x"] - a) ** 2) < 1e-6


def test_subset_of_parameters_and_counter():
    state = _state(lr=0.1)
    params = {"a": np.ones(2, dtype=np.float32), "b": np.ones(2, dtype=np.float32)}
    new, state = step(state, params, GradientRecord(a=np.ones(2, dtype=np.float32)))
    assert new["b"] is params["b"]
    assert not np.array_equal(new["a"], params["a"])
    new, state = step(state, new, GradientRecord())
    assert state.k == 2
    assert "b" not in state.m


def test_params_are_not_written_in_place():
    params = {"a": np.ones(3, dtype=np.float32)}
    before = params["a"].copy()
    new, _ = step(_state(), params, GradientRecord(a=np.ones(3)))
    np.testing.assert_array_equal(params["a"], before)
    assert new["a"].dtype == np.float32


def test_state_shapes_and_counter():
    state = _state()
    params = {"a": np.zeros((2, 3))}
    rng = np.random.default_rng(1)
    for _ in range(5):
        params, state = step(state, params, GradientRecord(a=rng.standard_normal((2, 3))))
    assert state.m["a"].shape == params["a"].shape
    assert np.all(state.v["a"] >= 0)


def test_gradient_clipping():
    state = _state(lr=0.1, grad_clip=1.0, weight_decay=0.0)
    _, state = step(state, {"a": np.zeros(2)}, GradientRecord(a=np.array([30.0, 40.0])))
    np.testing.assert_allclose(state.m["a"], 0.1 * np.array([0.6, 0.8]))


def test_non_finite_gradient_raises():
    with pytest.raises(DivergenceError) as info:
        step(_state(), {"a": np.zeros(2)}, GradientRecord(a=np.array([np.nan, 0.0])))
    assert info.value.step == 1


def test_unknown_gradient_raises():
    with pytest.raises(ShapeError):
        step(_state(), {"a": np.zeros(2)}, GradientRecord(b=np.zeros(2)))


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(beta1=1.0)
    with pytest.raises(ValueError):
        OptimizerConfig(unknown=1)
