import math

import numpy as np
import pytest

from mrgrp import tensor as T
from mrgrp.tensor import (EmptyCandidateError, ShapeError, Tape, Tensor, backward,
                          finite_difference_check, use_tape)


def grad_of(f, x_data):
    x = Tensor(np.asarray(x_data, dtype=float), requires_grad=True)
    tape = Tape()
    with use_tape(tape):
        out = f(x)
    backward(out, tape)
    return x.grad


class TestMatmul:
    def test_identity(self):
        b = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        out = T.matmul(Tensor(np.eye(2)), b)
        np.testing.assert_array_equal(out.data, b.data)

    def test_hand_product(self):
        a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = Tensor(np.array([[0.0], [1.0]]))
        np.testing.assert_array_equal(T.matmul(a, b).data, np.array([[2.0], [4.0]]))

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
            T.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 2))))

    def test_grad_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        b = Tensor(rng.uniform(-2, 2, size=(3, 2)))
        err = finite_difference_check(
            lambda x: T.sum_all(T.matmul(x, b)), Tensor(rng.uniform(-2, 2, size=(4, 3))))
        assert err < 1e-6

    def test_grad_flows_to_both_operands(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.uniform(-2, 2, size=(2, 3)))
        err = finite_difference_check(
            lambda x: T.sum_all(T.matmul(a, x)), Tensor(rng.uniform(-2, 2, size=(3, 2))))
        assert err < 1e-6


class TestSoftmaxMasked:
    def test_uniform_when_equal(self):
        p = T.softmax_masked(Tensor(np.zeros(4)), np.zeros(4, dtype=bool))
        np.testing.assert_allclose(p.data, [0.25] * 4)

    def test_single_candidate(self):
        p = T.softmax_masked(Tensor(np.zeros(2)), np.array([False, True]))
        np.testing.assert_array_equal(p.data, [1.0, 0.0])

    def test_matches_direct_formula(self):
        logits = np.array([1.0, 2.0, 3.0])
        p = T.softmax_masked(Tensor(logits), np.zeros(3, dtype=bool))
        expect = np.exp(logits) / np.exp(logits).sum()
        np.testing.assert_allclose(p.data, expect, atol=1e-12)

    def test_all_masked_raises(self):
        with pytest.raises(EmptyCandidateError):
            T.softmax_masked(Tensor(np.zeros(3)), np.ones(3, dtype=bool))

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            n = int(rng.integers(2, 9))
            logits = rng.uniform(-2, 2, size=n)
            mask = rng.random(n) < 0.4
            if mask.all():
                mask[int(rng.integers(n))] = False
            p = T.softmax_masked(Tensor(logits), mask).data
            assert abs(p.sum() - 1.0) <= 1e-9
            assert (p[mask] == 0.0).all()
            shifted = T.softmax_masked(Tensor(logits + 13.7), mask).data
            assert np.max(np.abs(p - shifted)) < 1e-9

    def test_grad(self):
        rng = np.random.default_rng(3)
        mask = np.array([False, True, False, False])
        w = rng.uniform(-1, 1, size=4)

        def f(x):
            return T.sum_all(T.mul(T.softmax_masked(x, mask), Tensor(w)))

        assert finite_difference_check(f, Tensor(rng.uniform(-2, 2, size=4))) < 1e-6


class TestGelu:
    def test_zero_fixed_point(self):
        assert T.gelu(Tensor(np.array(0.0))).item() == 0.0

    def test_asymptotic_identity(self):
        assert abs(T.gelu(Tensor(np.array(10.0))).item() - 10.0) < 1e-6

    def test_grad_at_half(self):
        err = finite_difference_check(lambda x: T.sum_all(T.gelu(x)),
                                      Tensor(np.array([0.5])))
        assert err < 1e-6


class TestLstmCell:
    @staticmethod
    def _zero_params(d_in, d_h):
        return (Tensor(np.zeros((d_in, 4 * d_h)), requires_grad=True),
                Tensor(np.zeros((d_h, 4 * d_h)), requires_grad=True),
                Tensor(np.zeros(4 * d_h), requires_grad=True))

    def test_zero_fixed_point(self):
        w_ih, w_hh, b = self._zero_params(3, 2)
        h, c = T.lstm_cell(Tensor(np.ones(3)), Tensor(np.zeros(2)), Tensor(np.zeros(2)),
                           w_ih, w_hh, b)
        np.testing.assert_array_equal(h.data, np.zeros(2))
        np.testing.assert_array_equal(c.data, np.zeros(2))

    def test_zero_params_halve_cell(self):
        w_ih, w_hh, b = self._zero_params(3, 2)
        c0 = np.array([0.8, -1.2])
        h, c = T.lstm_cell(Tensor(np.ones(3)), Tensor(np.zeros(2)), Tensor(c0),
                           w_ih, w_hh, b)
        np.testing.assert_allclose(c.data, c0 / 2, atol=1e-12)
        np.testing.assert_allclose(h.data, 0.5 * np.tanh(c0 / 2), atol=1e-12)

    def test_grad_all_params(self):
        rng = np.random.default_rng(11)
        d_in, d_h = 3, 4
        x = Tensor(rng.uniform(-1, 1, size=d_in))
        h0 = Tensor(rng.uniform(-1, 1, size=d_h))
        c0 = Tensor(rng.uniform(-1, 1, size=d_h))
        w_hh = Tensor(rng.uniform(-0.5, 0.5, size=(d_h, 4 * d_h)))
        b = Tensor(rng.uniform(-0.5, 0.5, size=4 * d_h))

        def f(w):
            h, c = T.lstm_cell(x, h0, c0, w, w_hh, b)
            return T.sum_all(T.add(h, c))

        err = finite_difference_check(f, Tensor(rng.uniform(-0.5, 0.5, size=(d_in, 4 * d_h))))
        assert err < 1e-4

    def test_dimension_mismatch(self):
        w_ih, w_hh, b = self._zero_params(3, 2)
        with pytest.raises(ShapeError):
            T.lstm_cell(Tensor(np.zeros(5)), Tensor(np.zeros(2)), Tensor(np.zeros(2)),
                        w_ih, w_hh, b)


class TestBackward:
    def test_identity(self):
        x = Tensor(np.array([3.0]), requires_grad=True)
        tape = Tape()
        backward(x, tape)
        np.testing.assert_array_equal(x.grad, [1.0])

    def test_hand_differentiation(self):
        # y = sum(x * x) -> grad 2x
        g = grad_of(lambda x: T.sum_all(T.mul(x, x)), [1.0, 2.0, 3.0])
        np.testing.assert_allclose(g, [2.0, 4.0, 6.0], atol=1e-12)

    def test_off_path_tensor_has_zero_grad(self):
        x = Tensor(np.array([1.0]), requires_grad=True)
        w = Tensor(np.array([5.0]), requires_grad=True)
        tape = Tape()
        with use_tape(tape):
            y = T.sum_all(T.mul(x, x))
        backward(y, tape)
        np.testing.assert_array_equal(w.grad, [0.0])

    def test_non_scalar_output_rejected(self):
        x = Tensor(np.ones(3), requires_grad=True)
        tape = Tape()
        with use_tape(tape):
            y = T.mul(x, x)
        with pytest.raises(ShapeError):
            backward(y, tape)

    def test_composite_pipeline_grad(self):
        # matmul -> gelu -> masked softmax -> cross entropy
        rng = np.random.default_rng(5)
        w = Tensor(rng.uniform(-1, 1, size=(3, 4)))
        mask = np.array([False, False, True, False])

        def f(x):
            logits = T.gelu(T.matmul(x, w))
            p = T.softmax_masked(logits, mask)
            return T.neg(T.log(T.pick(p, 1)))

        err = finite_difference_check(f, Tensor(rng.uniform(-1, 1, size=3)))
        assert err < 1e-4

    def test_deterministic_grads(self):
        rng = np.random.default_rng(9)
        data = rng.uniform(-1, 1, size=(4, 4))

        def run():
            x = Tensor(data.copy(), requires_grad=True)
            tape = Tape()
            with use_tape(tape):
                y = T.sum_all(T.gelu(T.matmul(x, x)))
            backward(y, tape)
            return x.grad

        a, b = run(), run()
        assert (a == b).all()


class TestFiniteDifferenceCheck:
    def test_constant_gradient(self):
        x = Tensor(np.random.default_rng(2).uniform(-2, 2, size=6))
        assert finite_difference_check(T.sum_all, x) < 1e-10

    def test_nonlinear_map(self):
        rng = np.random.default_rng(4)
        w = Tensor(rng.uniform(-1, 1, size=(5, 3)))
        x = Tensor(rng.uniform(-2, 2, size=5))
        err = finite_difference_check(lambda t: T.sum_all(T.gelu(T.matmul(t, w))), x)
        assert err < 1e-5

    def test_dead_masked_branch_reports_zero(self):
        mask = np.array([False, True, False])
        w = np.array([1.0, 1.0, 1.0])

        def f(x):
            return T.sum_all(T.mul(T.masked_fill(x, mask, 0.0), Tensor(w)))

        x = Tensor(np.array([0.3, -0.7, 1.1]))
        assert finite_difference_check(f, x) < 1e-10


class TestStructuralOps:
    def test_concat_and_slice_roundtrip_grads(self):
        rng = np.random.default_rng(6)
        a = rng.uniform(-1, 1, size=(3, 2))

        def f(x):
            joined = T.concat_cols([x, T.scale(x, 2.0)])
            return T.sum_all(T.mul(T.slice_cols(joined, 2, 4), T.slice_cols(joined, 0, 2)))

        assert finite_difference_check(f, Tensor(a)) < 1e-6

    def test_gather_aggregate_grads(self):
        rng = np.random.default_rng(8)
        idx = np.array([0, 2, 2, 1])
        tgt = np.array([1, 1, 0, 2])

        def f(x):
            msg = T.gather_rows(x, idx)
            return T.sum_all(T.mul(T.aggregate_rows(msg, tgt, 3), Tensor(rng_w)))

        rng_w = rng.uniform(-1, 1, size=(3, 2))
        assert finite_difference_check(f, Tensor(rng.uniform(-1, 1, size=(3, 2)))) < 1e-6

    def test_layer_norm_grad(self):
        rng = np.random.default_rng(10)
        gain = Tensor(rng.uniform(0.5, 1.5, size=4))
        bias = Tensor(rng.uniform(-0.5, 0.5, size=4))

        def f(x):
            return T.sum_all(T.mul(T.layer_norm(x, gain, bias), Tensor(w)))

        w = rng.uniform(-1, 1, size=(3, 4))
        assert finite_difference_check(f, Tensor(rng.uniform(-2, 2, size=(3, 4)))) < 1e-4

    def test_maximum_picks_first_on_tie(self):
        a = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        b = Tensor(np.array([1.0, 3.0]), requires_grad=True)
        tape = Tape()
        with use_tape(tape):
            y = T.sum_all(T.maximum(a, b))
        backward(y, tape)
        np.testing.assert_array_equal(a.grad, [1.0, 0.0])
        np.testing.assert_array_equal(b.grad, [0.0, 1.0])


def test_random_op_gradients_match_finite_differences():
    """Every differentiable op, random inputs in [-2, 2], many seeded trials."""
    rng = np.random.default_rng(1234)
    worst = 0.0
    for trial in range(100):
        n = int(rng.integers(2, 5))
        d = int(rng.integers(2, 5))
        w = Tensor(rng.uniform(-2, 2, size=(d, d)))
        mask = rng.random(n) < 0.3
        if mask.all():
            mask[0] = False
        gain = Tensor(rng.uniform(0.5, 1.5, size=d))
        bias = Tensor(rng.uniform(-0.5, 0.5, size=d))

        def f(x):
            y = T.gelu(T.matmul(x, w))
            y = T.layer_norm(y, gain, bias)
            v = T.softmax_masked(T.row(y, 0), mask[:d] if d == n else np.zeros(d, bool))
            return T.add(T.mean_all(y), T.sum_all(T.mul(v, v)))

        err = finite_difference_check(f, Tensor(rng.uniform(-2, 2, size=(n, d))))
        worst = max(worst, err)
    assert worst < 1e-4


def test_softmax_shift_invariance_property():
    rng = np.random.default_rng(77)
    x = rng.uniform(-3, 3, size=(5, 5))
    p1 = T.softmax_rows(Tensor(x)).data
    p2 = T.softmax_rows(Tensor(x + 4.2)).data
    assert np.max(np.abs(p1 - p2)) < 1e-9
    np.testing.assert_allclose(p1.sum(axis=1), np.ones(5), atol=1e-9)
