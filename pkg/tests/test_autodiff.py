"""Tests for the tape autodiff, layers and optimizer."""

import sys
import os
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from wmr.errors import NumericalError, ShapeError
from wmr.services.autodiff import (
    LSTM,
    AdamState,
    EluMLP,
    LstmState,
    Tape,
    Tensor,
    absolute,
    adam_step,
    clamp,
    clip_grad_norm,
    concat,
    elu,
    exp,
    forward_primitive,
    log,
    matmul,
    minimum,
    mul,
    precision,
    reduce_mean,
    reduce_sum,
    sigmoid,
    slice_cols,
    square,
    stop_gradient,
    tanh,
)


def _loss(fn, inputs, weight):
    return reduce_sum(mul(fn(*inputs), weight))


def grad_check(fn, *arrays, eps=1e-6, tol=1e-6):
    """Compare tape gradients with central differences, in float64."""
    with precision(np.float64):
        params = [Tensor(a, requires_grad=True) for a in arrays]
        probe = fn(*[Tensor(a) for a in arrays])
        weight = Tensor(np.random.default_rng(7).normal(size=probe.shape))
        with Tape() as tape:
            loss = _loss(fn, params, weight)
        analytic = tape.gradient(loss, params)

        for k, a in enumerate(arrays):
            numeric = np.zeros_like(a, dtype=np.float64)
            for idx in np.ndindex(a.shape):
                hi = [np.array(x, dtype=np.float64) for x in arrays]
                lo = [np.array(x, dtype=np.float64) for x in arrays]
                hi[k][idx] += eps
                lo[k][idx] -= eps
                f_hi = _loss(fn, [Tensor(x) for x in hi], weight).item()
                f_lo = _loss(fn, [Tensor(x) for x in lo], weight).item()
                numeric[idx] = (f_hi - f_lo) / (2 * eps)
            np.testing.assert_allclose(analytic[k], numeric, rtol=tol, atol=tol)


RNG = np.random.default_rng(0)
A = RNG.normal(size=(3, 4))
B = RNG.normal(size=(3, 4))
ROW = RNG.normal(size=4)


class TestPrimitiveGradients:
    def test_add_sub_mul(self):
        grad_check(lambda a, b: a + b, A, B)
        grad_check(lambda a, b: a - b, A, B)
        grad_check(lambda a, b: a * b, A, B)

    def test_row_broadcast(self):
        grad_check(lambda a, r: a + r, A, ROW)
        grad_check(lambda a, r: a * r, A, ROW)
        grad_check(lambda r, a: r - a, ROW, A)

    def test_scalar_broadcast(self):
        grad_check(lambda a, s: a * s, A, np.array(1.7))

    def test_matmul(self):
        grad_check(matmul, A, RNG.normal(size=(4, 2)))

    def test_unary(self):
        away = A + np.sign(A) * 0.1
        for fn in (elu, sigmoid, tanh, exp, square, absolute):
            grad_check(fn, away)

    def test_log_positive(self):
        grad_check(log, np.abs(A) + 0.5)

    def test_clamp_inside_and_outside(self):
        x = np.array([[-2.0, -0.3, 0.2, 1.9]])
        grad_check(lambda t: clamp(t, -1.0, 1.0), x)

    def test_minimum(self):
        grad_check(minimum, A, A + np.where(RNG.random(A.shape) > 0.5, 0.3, -0.3))

    def test_concat_and_slice(self):
        grad_check(lambda a, b: concat([a, b], axis=1), A, B)
        grad_check(lambda a, b: concat([a, b], axis=0), A, B)
        grad_check(lambda a: slice_cols(a, 1, 3), A)

    def test_reductions(self):
        grad_check(lambda a: reduce_sum(a, axis=1), A)
        grad_check(lambda a: reduce_mean(a, axis=0), A)
        grad_check(lambda a: reduce_mean(a), A)

    def test_reused_input_accumulates(self):
        grad_check(lambda a: a * a + a, A)


class TestLayerGradients:
    def test_lstm_cell_all_weights(self):
        with precision(np.float64):
            lstm = LSTM(3, 2, np.random.default_rng(1))
        x = RNG.normal(size=(2, 3))
        h0 = RNG.normal(size=(2, 2))
        c0 = RNG.normal(size=(2, 2))

        def cell(w_ih, w_hh, bias, h, c):
            lstm.w_ih, lstm.w_hh, lstm.bias = w_ih, w_hh, bias
            out, state = lstm(Tensor(x), LstmState(h, c))
            return concat([out, state.cell], axis=1)

        grad_check(
            cell,
            lstm.w_ih.data.copy(),
            lstm.w_hh.data.copy(),
            RNG.normal(size=8) * 0.1,
            h0,
            c0,
        )

    def test_saturated_forget_gate_keeps_cell(self):
        hidden = 3
        with precision(np.float64):
            lstm = LSTM(4, hidden, np.random.default_rng(2))
            bias = np.zeros(4 * hidden)
            bias[:hidden] = -60.0
            bias[hidden : 2 * hidden] = 60.0
            lstm.bias.data = bias
            c0 = RNG.normal(size=(2, hidden))
            state = LstmState(Tensor(np.zeros((2, hidden))), Tensor(c0))
            for x in np.random.default_rng(3).normal(size=(20, 2, 4)):
                _, state = lstm(Tensor(x), state)
        np.testing.assert_allclose(state.cell.data, c0, atol=1e-12)

    def test_mlp_parameter_names(self):
        mlp = EluMLP([3, 5, 2], np.random.default_rng(0))
        names = [n for n, _ in mlp.named_parameters("head.")]
        assert names == ["head.layers.0.weight", "head.layers.0.bias", "head.layers.1.weight", "head.layers.1.bias"]


class TestTapeSemantics:
    def test_stop_gradient_blocks(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(square(stop_gradient(x)))
        (g,) = tape.gradient(loss, [x])
        assert np.array_equal(g, np.zeros((2, 2)))

    def test_stop_gradient_forward_identity(self):
        x = Tensor(A)
        assert np.array_equal(stop_gradient(x).numpy(), x.numpy())

    def test_unused_parameter_gets_zeros(self):
        x = Tensor(np.ones(3), requires_grad=True)
        y = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            loss = reduce_sum(x)
        gx, gy = tape.gradient(loss, [x, y])
        assert np.array_equal(gx, np.ones(3))
        assert np.array_equal(gy, np.zeros(3))

    def test_no_tape_records_nothing(self):
        x = Tensor(np.ones(3), requires_grad=True)
        out = square(x)
        assert out.tape is None

    def test_op_kinds_in_order(self):
        x = Tensor(np.ones((1, 2)), requires_grad=True)
        with Tape() as tape:
            reduce_sum(tanh(stop_gradient(x)))
        assert tape.op_kinds() == ["stop_gradient", "tanh", "sum"]

    def test_default_precision_is_float32(self):
        assert Tensor([1.0]).data.dtype == np.float32


class TestErrors:
    def test_matmul_shape(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_incompatible_broadcast(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones(2))

    def test_non_scalar_loss(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            out = square(x)
        with pytest.raises(ShapeError):
            tape.gradient(out, [x])

    def test_slice_out_of_range(self):
        with pytest.raises(ShapeError):
            slice_cols(Tensor(np.ones((2, 3))), 2, 5)

    def test_non_finite_output(self):
        with pytest.raises(NumericalError):
            log(Tensor(np.zeros(2)))

    def test_unknown_primitive(self):
        with pytest.raises(ShapeError):
            forward_primitive("conv2d", Tensor(np.ones(2)))


class TestOptimizer:
    def test_clip_scales_to_max_norm(self):
        grads, norm = clip_grad_norm([np.array([3.0, 0.0]), np.array([4.0])], 1.0)
        assert abs(norm - 5.0) < 1e-12
        np.testing.assert_allclose(grads[0], [0.6, 0.0])
        np.testing.assert_allclose(grads[1], [0.8])

    def test_clip_leaves_small_gradients(self):
        grads, norm = clip_grad_norm([np.array([0.3, 0.4])], 1.0)
        assert abs(norm - 0.5) < 1e-12
        np.testing.assert_array_equal(grads[0], [0.3, 0.4])

    def test_clip_rejects_nan(self):
        with pytest.raises(NumericalError):
            clip_grad_norm([np.array([np.nan])], 1.0)

    def test_first_adam_step_moves_by_lr(self):
        with precision(np.float64):
            p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        state = AdamState.for_params([p], lr=0.1)
        adam_step([p], [np.array([0.5, -3.0])], state)
        np.testing.assert_allclose(p.data, [0.9, -1.9], atol=1e-6)
        assert state.step == 1

    def test_zero_gradient_leaves_parameters(self):
        with precision(np.float64):
            p = Tensor(np.array([0.7, -1.3, 2.0]), requires_grad=True)
        state = AdamState.for_params([p], lr=0.1)
        adam_step([p], [np.zeros(3)], state)
        np.testing.assert_array_equal(p.data, [0.7, -1.3, 2.0])
        assert state.step == 1

    def test_repeated_gradient_steps_bounded_by_lr(self):
        lr = 0.05
        with precision(np.float64):
            p = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
        state = AdamState.for_params([p], lr=lr)
        g = np.array([0.3, -7.0, 1e-3])
        before = p.data.copy()
        adam_step([p], [g], state)
        first = p.data - before
        adam_step([p], [g], state)
        second = p.data - before - first
        for step in (first, second):
            assert np.all(np.abs(step) <= lr * (1 + 1e-12))
            np.testing.assert_array_equal(np.sign(step), -np.sign(g))
        np.testing.assert_allclose(np.abs(second), lr, rtol=1e-4)

    def test_adam_shape_mismatch(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        state = AdamState.for_params([p], lr=0.1)
        with pytest.raises(ShapeError):
            adam_step([p], [np.zeros(3)], state)

    def test_adam_rejects_non_finite(self):
        p = Tensor(np.zeros(2), requires_grad=True)
        state = AdamState.for_params([p], lr=0.1)
        with pytest.raises(NumericalError):
            adam_step([p], [np.array([np.inf, 0.0])], state)
        assert state.step == 0
