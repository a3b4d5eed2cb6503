import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from errors import ContractViolation, NumericalError
from logic.optimizer import Adam, adam_step, AdamState


def test_first_step_moves_by_the_learning_rate():
    params = {"w": np.array([1.0, 2.0, 3.0])}
    adam_step(params, {"w": np.array([0.5, -2.0, 1e-3])}, AdamState(), lr=0.1)
    assert_allclose(params["w"], [0.9, 2.1, 2.9])


def test_per_group_rates_and_frozen_groups():
    params = {"a": np.zeros(2), "b": np.zeros(2)}
    optimizer = Adam({"a": 0.01, "b": 0.0})
    optimizer.step(params, {"a": np.ones(2), "b": np.ones(2)})
    assert_allclose(params["a"], [-0.01, -0.01])
    assert_array_equal(params["b"], [0.0, 0.0])
    assert optimizer.state.t == {"a": 1, "b": 1}


def test_groups_without_gradients_are_skipped():
    params = {"a": np.ones(2), "b": np.ones(2)}
    Adam({"a": 0.1, "b": 0.1}).step(params, {"a": np.ones(2)})
    assert_array_equal(params["b"], [1.0, 1.0])


def test_non_finite_gradient_names_the_group_and_touches_nothing():
    params = {"a": np.ones(2), "b": np.ones(2)}
    with pytest.raises(NumericalError) as info:
        adam_step(params, {"a": np.ones(2), "b": np.array([1.0, np.nan])}, AdamState(), lr=0.1)
    assert info.value.group == "b"
    assert info.value.exit_code == 3
    assert_array_equal(params["a"], [1.0, 1.0])


def test_shape_mismatch_is_a_contract_violation():
    with pytest.raises(ContractViolation):
        adam_step({"a": np.ones(2)}, {"a": np.ones(3)}, AdamState(), lr=0.1)


def test_remap_follows_lineage():
    params = {"positions": np.zeros((3, 3))}
    optimizer = Adam({"positions": 0.1})
    optimizer.step(params, {"positions": np.arange(9.0).reshape(3, 3)})
    before = optimizer.state.m["positions"].copy()
    optimizer.remap(np.array([2, 0, -1, 2]))
    after = optimizer.state.m["positions"]
    assert after.shape == (4, 3)
    assert_array_equal(after[0], before[2])
    assert_array_equal(after[1], before[0])
    assert_array_equal(after[2], np.zeros(3))
    assert_array_equal(after[3], before[2])


def test_forget_drops_moments():
    optimizer = Adam({"a": 0.1})
    optimizer.step({"a": np.ones(2)}, {"a": np.ones(2)})
    optimizer.forget(["a"])
    assert "a" not in optimizer.state.m and "a" not in optimizer.state.t
