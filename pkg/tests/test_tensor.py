"""Engine tests: forward values, backward rules, error contracts."""

import numpy as np
import pytest

from treeattn.tensor import (NonFiniteError, ShapeError, Tape, Tensor, absolute,
                             add, backward, concat, cross_entropy, dot,
                             finite_difference_check, log, matmul, mean, mul,
                             narrow, relu, sigmoid, softmax, st_onehot,
                             take_row, tanh, weighted_sum, exp)

from conftest import max_op_gradient_error


class TestForward:
    def test_sigmoid_midpoint(self):
        assert sigmoid(Tensor([0.0])).data[0] == 0.5

    def test_softmax_equal_logits(self):
        out = softmax(Tensor([1.7, 1.7, 1.7]))
        np.testing.assert_allclose(out.data, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)

    def test_relu_definition(self):
        out = relu(Tensor([-2.5, 3.0, 0.0]))
        np.testing.assert_array_equal(out.data, [0.0, 3.0, 0.0])

    def test_abs(self):
        np.testing.assert_array_equal(absolute(Tensor([-1.5, 2.0])).data, [1.5, 2.0])

    def test_matmul_vector_and_matrix(self):
        m = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(matmul(m, Tensor([1.0, 1.0])).data, [3.0, 7.0])
        np.testing.assert_array_equal(
            matmul(m, Tensor([[1.0, 0.0], [0.0, 1.0]])).data, m.data)

    def test_concat_vectors_and_scalars(self):
        out = concat([Tensor([1.0, 2.0]), Tensor(3.0), Tensor([4.0])])
        np.testing.assert_array_equal(out.data, [1.0, 2.0, 3.0, 4.0])

    def test_weighted_sum(self):
        out = weighted_sum([Tensor([1.0, 0.0]), Tensor([0.0, 1.0])],
                           Tensor([2.0, 3.0]))
        np.testing.assert_array_equal(out.data, [2.0, 3.0])

    def test_mean_and_dot(self):
        assert mean(Tensor([[1.0, 2.0], [3.0, 4.0]])).item() == 2.5
        assert dot(Tensor([1.0, 2.0]), Tensor([3.0, 4.0])).item() == 11.0

    def test_cross_entropy_uniform_logits(self):
        for k in (2, 3, 7):
            loss = cross_entropy(Tensor(np.full(k, 0.3)), 0)
            assert loss.item() == pytest.approx(np.log(k), abs=1e-12)

    def test_narrow_and_take_row(self):
        np.testing.assert_array_equal(narrow(Tensor([0.0, 1.0, 2.0, 3.0]), 1, 2).data,
                                      [1.0, 2.0])
        np.testing.assert_array_equal(
            take_row(Tensor([[1.0, 2.0], [3.0, 4.0]]), 1).data, [3.0, 4.0])


class TestBackward:
    def test_square_gradient(self):
        x = Tensor(3.0, requires_grad=True)
        with Tape() as tape:
            loss = mul(x, x)
            backward(tape, loss)
        assert x.grad == pytest.approx(6.0)

    def test_product_rule_through_dot(self):
        a = Tensor([1.0, 2.0], requires_grad=True)
        b = Tensor([3.0, 4.0], requires_grad=True)
        with Tape() as tape:
            backward(tape, dot(a, b))
        np.testing.assert_array_equal(a.grad, [3.0, 4.0])
        np.testing.assert_array_equal(b.grad, [1.0, 2.0])

    def test_softmax_cross_entropy_gradient(self):
        logits = Tensor([0.0, 0.0], requires_grad=True)
        with Tape() as tape:
            backward(tape, cross_entropy(logits, 0))
        np.testing.assert_allclose(logits.grad, [-0.5, 0.5], atol=1e-15)

    def test_accumulation_over_multiple_uses(self):
        # y = x*x + x so dy/dx = 2x + 1, three uses of the same tensor
        x = Tensor(np.array([2.0]), requires_grad=True)
        with Tape() as tape:
            loss = mean(add(mul(x, x), x))
            backward(tape, loss)
        assert x.grad[0] == pytest.approx(5.0)

    def test_accumulation_is_sum_of_single_uses(self):
        rng = np.random.default_rng(1)
        v = rng.normal(size=4)
        r1, r2 = rng.normal(size=4), rng.normal(size=4)
        x = Tensor(v, requires_grad=True)
        with Tape() as tape:
            backward(tape, add(dot(x, Tensor(r1)), dot(x, Tensor(r2))))
        np.testing.assert_allclose(x.grad, r1 + r2, atol=1e-15)

    def test_backward_requires_scalar(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = add(x, x)
            with pytest.raises(ShapeError, match="scalar"):
                backward(tape, y)

    def test_backward_requires_loss_on_tape(self):
        x = Tensor(1.0, requires_grad=True)
        with Tape() as tape:
            mul(x, x)
            with pytest.raises(ValueError, match="not produced on this tape"):
                backward(tape, Tensor(5.0))

    def test_no_tracking_without_tape(self):
        x = Tensor([1.0], requires_grad=True)
        y = mul(x, x)
        assert not y.requires_grad

    def test_relu_and_abs_subgradient_zero_at_zero(self):
        x = Tensor([0.0], requires_grad=True)
        with Tape() as tape:
            backward(tape, mean(relu(x)))
        assert x.grad[0] == 0.0
        x = Tensor([0.0], requires_grad=True)
        with Tape() as tape:
            backward(tape, mean(absolute(x)))
        assert x.grad[0] == 0.0


class TestErrors:
    def test_shape_error_names_operation_and_shapes(self):
        with pytest.raises(ShapeError, match=r"add.*\(2,\).*\(3,\)"):
            add(Tensor([1.0, 2.0]), Tensor([1.0, 2.0, 3.0]))
        with pytest.raises(ShapeError, match="matmul"):
            matmul(Tensor([[1.0, 2.0]]), Tensor([1.0, 2.0, 3.0]))
        with pytest.raises(ShapeError, match="softmax"):
            softmax(Tensor([[1.0]]))
        with pytest.raises(ShapeError, match="cross_entropy"):
            cross_entropy(Tensor([0.0, 0.0]), 2)
        with pytest.raises(ShapeError, match="narrow"):
            narrow(Tensor([1.0, 2.0]), 1, 5)
        with pytest.raises(ShapeError, match="weighted_sum"):
            weighted_sum([Tensor([1.0])], Tensor([1.0, 2.0]))
        with pytest.raises(ShapeError, match="concat"):
            concat([])

    def test_non_finite_is_hard_error(self):
        with pytest.raises(NonFiniteError):
            Tensor([np.inf])
        with pytest.raises(NonFiniteError, match="exp"):
            exp(Tensor([1000.0]))
        with pytest.raises(NonFiniteError, match="log"):
            log(Tensor([0.0]))
        with pytest.raises(NonFiniteError, match="log"):
            log(Tensor([-1.0]))


class TestDeterminism:
    def test_bit_identical_outputs_and_gradients(self):
        def run():
            rng = np.random.default_rng(11)
            x = Tensor(rng.normal(size=(4, 5)), requires_grad=True)
            v = Tensor(rng.normal(size=5), requires_grad=True)
            with Tape() as tape:
                out = mean(tanh(matmul(x, v)))
                backward(tape, out)
            return out.item(), x.grad.copy(), v.grad.copy()

        o1, gx1, gv1 = run()
        o2, gx2, gv2 = run()
        assert o1 == o2
        assert (gx1 == gx2).all() and (gv1 == gv2).all()


class TestFiniteDifference:
    def test_quadratic_is_exact_to_rounding(self):
        err = finite_difference_check(lambda x: mul(x, x), Tensor(3.0), 1e-5)
        assert err < 1e-7

    def test_abs_away_from_zero(self):
        err = finite_difference_check(lambda x: mean(absolute(x)), Tensor([1.0]), 1e-5)
        assert err < 1e-7

    def test_step_must_be_positive(self):
        with pytest.raises(ValueError):
            finite_difference_check(lambda x: mul(x, x), Tensor(1.0), 0.0)

    def test_every_cataloged_op_below_1e6(self):
        errors = max_op_gradient_error(seed=3)
        for name, err in errors.items():
            assert err < 1e-6, f"{name}: {err}"

    def test_st_onehot_forward_exact_backward_identity(self):
        p = Tensor([0.2, 0.5, 0.3], requires_grad=True)
        with Tape() as tape:
            out = st_onehot(p, 1)
            loss = dot(out, Tensor([1.0, 2.0, 3.0]))
            backward(tape, loss)
        assert out.data.tolist() == [0.0, 1.0, 0.0]
        np.testing.assert_array_equal(p.grad, [1.0, 2.0, 3.0])
