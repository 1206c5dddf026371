"""
Tests for the autograd package
==============================

- Tape recording and backward()
- Gradient accumulation across fan-out
- Adam update rule and its state round trip
- Central-difference gradient checking
"""

import numpy as np
import pytest

from texture_refine.autograd import ops
from texture_refine.autograd.gradcheck import finite_diff_check
from texture_refine.autograd.optim import Adam, AdamState, adam_step
from texture_refine.autograd.tensor import Tape, Tensor, backward
from texture_refine.domain.errors import ContractViolation, GradCheckFailure
from texture_refine.nn.functional import conv2d

SEEDS = [1, 2, 3]

# name -> (op, needs positive input)
POINTWISE = {
    "sigmoid": (ops.sigmoid, False),
    "relu": (ops.relu, False),
    "softplus": (ops.softplus, False),
    "clamp_min": (lambda t: ops.clamp_min(t, 0.0), False),
    "absolute": (ops.absolute, False),
    "sqrt": (ops.sqrt, True),
    "div": (lambda t: ops.div(t, ops.add(ops.mul(t, t), 1.0)), False),
    "rdiv": (lambda t: ops.div(1.0, t), True),
}


class TestBackward:
    """Reverse-mode differentiation on the tape."""

    def test_sum_gradient_is_ones(self):
        """d sum(x) / dx = 1 everywhere."""
        x = Tensor(np.arange(4.0).reshape(2, 2), requires_grad=True)
        with Tape() as tape:
            tape.backward(ops.sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((2, 2)))

    def test_square_gradient(self):
        """d sum(x*x) / dx = 2x."""
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(ops.sum(x * x))
        np.testing.assert_allclose(x.grad, [2.0, 4.0, 6.0])

    def test_fan_out_accumulates(self):
        """d sum(x + x) / dx = 2 exactly."""
        x = Tensor(np.random.default_rng(1).normal(size=(3, 2)), requires_grad=True)
        with Tape() as tape:
            tape.backward(ops.sum(x + x))
        np.testing.assert_array_equal(x.grad, np.full((3, 2), 2.0))

    def test_constant_never_receives_grad(self):
        """Inputs without requires_grad keep grad None."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        c = Tensor([3.0, 4.0])
        with Tape() as tape:
            tape.backward(ops.sum(x * c))
        assert c.grad is None
        np.testing.assert_allclose(x.grad, [3.0, 4.0])

    def test_non_scalar_loss_rejected(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
            with pytest.raises(ContractViolation):
                tape.backward(y)

    def test_backward_without_tape_rejected(self):
        x = Tensor([1.0], requires_grad=True)
        with pytest.raises(ContractViolation):
            backward(ops.sum(x))

    def test_nothing_recorded_outside_a_tape(self):
        """Eval-mode forwards build no graph."""
        x = Tensor([1.0, 2.0], requires_grad=True)
        y = ops.sum(ops.tanh(x))
        assert y.tape_node is None
        assert not y.requires_grad

    def test_tape_records_in_execution_order(self):
        x = Tensor([0.5], requires_grad=True)
        with Tape() as tape:
            a = ops.exp(x)
            b = ops.log(a)
            ops.sum(b)
        names = [node.name for node in tape.nodes]
        assert names.index("exp") < names.index("log") < names.index("sum")

    def test_gradients_accumulate_across_backward_calls(self):
        x = Tensor([1.0, -1.0], requires_grad=True)
        for _ in range(2):
            with Tape() as tape:
                tape.backward(ops.sum(ops.mul(x, 3.0)))
        np.testing.assert_allclose(x.grad, [6.0, 6.0])

    def test_binary_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            ops.add(Tensor(np.zeros((2, 2))), Tensor(np.zeros((2, 3))))


class TestFiniteDiffCheck:
    """The gradient checker itself."""

    def test_sum_is_exact(self, rng):
        assert finite_diff_check(ops.sum, rng.normal(size=(3, 4))) <= 1e-10

    def test_tanh(self, rng):
        x = rng.uniform(-2.0, 2.0, size=(5,))
        assert finite_diff_check(lambda t: ops.sum(ops.tanh(t)), x, eps=1e-5) <= 1e-6

    @pytest.mark.parametrize("seed", [1, 2, 3])
    def test_conv2d(self, seed):
        """sum(conv2d(x, w)) on a 1x1x4x4 input."""
        rng = np.random.default_rng(seed)
        weight = Tensor(rng.normal(size=(2, 1, 3, 3)))
        x = rng.normal(size=(1, 1, 4, 4))
        assert finite_diff_check(lambda t: ops.sum(conv2d(t, weight)), x) <= 1e-4

    @pytest.mark.parametrize("seed", SEEDS)
    @pytest.mark.parametrize("name", sorted(POINTWISE))
    def test_pointwise_ops(self, name, seed):
        """Each op on a 1x4x4x4 input, kept clear of kinks and the sqrt/div poles."""
        op, positive = POINTWISE[name]
        rng = np.random.default_rng(seed)
        magnitude = rng.uniform(0.2, 1.5, size=(1, 4, 4, 4))
        x = magnitude if positive else magnitude * rng.choice([-1.0, 1.0], size=magnitude.shape)
        weight = Tensor(rng.normal(size=x.shape))
        assert finite_diff_check(lambda t: ops.sum(ops.mul(op(t), weight)), x) <= 1e-4

    def test_norm(self, rng):
        assert finite_diff_check(ops.norm, rng.normal(size=(1, 4, 4, 4))) <= 1e-4

    def test_non_finite_value_reported(self):
        with np.errstate(invalid="ignore"):
            with pytest.raises(GradCheckFailure):
                finite_diff_check(lambda t: ops.sum(ops.log(t)), np.array([-1.0, 2.0]))

    def test_vector_function_rejected(self):
        with pytest.raises(ContractViolation):
            finite_diff_check(lambda t: ops.mul(t, 2.0), np.ones(3))

    def test_too_many_elements_rejected(self):
        with pytest.raises(ContractViolation):
            finite_diff_check(ops.sum, np.zeros(10_001))


class TestAdam:
    """Bias-corrected Adam."""

    def test_zero_gradient_is_fixed_point(self):
        params = {"x": np.array([1.0, -2.0])}
        state = adam_step(params, {"x": np.zeros(2)}, AdamState())
        np.testing.assert_array_equal(params["x"], [1.0, -2.0])
        np.testing.assert_array_equal(state.m["x"], 0.0)
        np.testing.assert_array_equal(state.v["x"], 0.0)
        assert state.step == 1

    def test_moments_decay_without_gradient(self):
        state = AdamState(m={"x": np.ones(2)}, v={"x": np.ones(2)})
        adam_step({"x": np.zeros(2)}, {"x": np.zeros(2)}, state)
        np.testing.assert_allclose(state.m["x"], 0.9)
        np.testing.assert_allclose(state.v["x"], 0.999)

    def test_first_step_moves_by_lr(self):
        """With bias correction the first step is lr * g / |g|."""
        params = {"x": np.array([0.0])}
        adam_step(params, {"x": np.array([1.0])}, AdamState(lr=1e-3))
        assert params["x"][0] == pytest.approx(-1e-3, rel=1e-6)

    def test_minimizes_quadratic(self):
        """100 steps on (x - 3)^2 from 0 with lr 0.1."""
        params = {"x": np.array([0.0])}
        state = AdamState(lr=0.1)
        for _ in range(100):
            adam_step(params, {"x": 2.0 * (params["x"] - 3.0)}, state)
        assert abs(params["x"][0] - 3.0) < 0.05

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractViolation):
            adam_step({"x": np.zeros(2)}, {"x": np.zeros(3)}, AdamState())

    def test_missing_gradient_leaves_parameter(self):
        params = {"a": np.array([1.0]), "b": np.array([1.0])}
        adam_step(params, {"a": np.array([1.0]), "b": None}, AdamState())
        assert params["b"][0] == 1.0
        assert params["a"][0] < 1.0

    def test_state_arrays_round_trip(self):
        p = Tensor(np.array([0.5, 0.25]), requires_grad=True)
        adam = Adam({"p": p}, lr=0.01)
        p.grad = np.array([1.0, -1.0])
        adam.step()
        arrays = adam.state_arrays()

        restored = Adam({"p": Tensor(np.zeros(2), requires_grad=True)}, lr=0.01)
        restored.load_state_arrays(arrays)
        assert restored.state.step == 1
        np.testing.assert_array_equal(restored.state.m["p"], adam.state.m["p"])
        np.testing.assert_array_equal(restored.state.v["p"], adam.state.v["p"])

    def test_invalid_betas_rejected(self):
        with pytest.raises(ContractViolation):
            AdamState(beta1=1.0)
