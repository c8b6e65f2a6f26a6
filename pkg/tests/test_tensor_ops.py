"""Autodiff core: op semantics, gradient rules, tape contracts.

Every gradient assertion here is against an independent central-difference
oracle implemented in this file, not against the library's own grad_check.
"""

import math

import numpy as np
import pytest

from sampledrop import tensor as T
from sampledrop.errors import ContractError, DimensionError, StateError
from sampledrop.tensor import Tape, Tensor, grad_check


def numeric_grad(f, x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of the scalar f() w.r.t. x.data."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        f_plus = float(f().data)
        flat[i] = orig - h
        f_minus = float(f().data)
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2 * h)
    return grad


def analytic_grad(f, x: Tensor) -> np.ndarray:
    x.zero_grad()
    with Tape() as tape:
        loss = f()
        tape.backward(loss)
    return x.grad


def assert_grad_matches(f, x: Tensor, rtol: float = 1e-6):
    ana = analytic_grad(f, x)
    num = numeric_grad(f, x)
    denom = np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-3)
    assert np.max(np.abs(ana - num) / denom) < rtol


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, b.data)

    def test_projector_row_selection(self):
        a = Tensor([[1.0, 0.0], [0.0, 0.0]])
        b = Tensor([[5.0, 6.0], [7.0, 8.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, [[5.0, 6.0], [0.0, 0.0]])

    def test_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(0)
        a = Tensor(rng.uniform(-2, 2, (3, 4)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, (4, 2)), requires_grad=True)
        assert_grad_matches(lambda: T.tensor_sum(T.matmul(a, b)), a)
        assert_grad_matches(lambda: T.tensor_sum(T.matmul(a, b)), b)

    def test_batched_gradient(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.uniform(-2, 2, (2, 3, 4)), requires_grad=True)
        b = Tensor(rng.uniform(-2, 2, (4, 5)), requires_grad=True)
        assert_grad_matches(lambda: T.tensor_sum(T.matmul(a, b)), a)
        assert_grad_matches(lambda: T.tensor_sum(T.matmul(a, b)), b)

    def test_shape_mismatch_names_both_shapes(self):
        a = Tensor(np.zeros((2, 3)))
        b = Tensor(np.zeros((4, 2)))
        with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 2\)"):
            T.matmul(a, b)


class TestElementwise:
    def test_add(self):
        out = T.add(Tensor([1.0, 2.0]), Tensor([3.0, 4.0]))
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_mul_identity_mask(self):
        x = Tensor([[1.5, -2.0], [0.25, 3.0]])
        out = T.mul(x, Tensor(np.ones_like(x.data)))
        np.testing.assert_array_equal(out.data, x.data)

    def test_activation_gradient_vs_finite_differences(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.uniform(-2, 2, 8), requires_grad=True)
        assert_grad_matches(lambda: T.tensor_sum(T.gelu(x)), x)

    def test_add_mul_gradients_with_broadcast(self):
        rng = np.random.default_rng(3)
        x = Tensor(rng.uniform(-2, 2, (3, 4)), requires_grad=True)
        bias = Tensor(rng.uniform(-2, 2, 4), requires_grad=True)
        assert_grad_matches(lambda: T.tensor_sum(T.add(x, bias)), bias)
        assert_grad_matches(lambda: T.tensor_sum(T.mul(x, bias)), bias)
        assert_grad_matches(lambda: T.tensor_sum(T.mul(x, bias)), x)

    def test_dispatcher(self):
        x = Tensor([1.0, 2.0])
        np.testing.assert_array_equal(T.elementwise("add", x, Tensor([1.0, 1.0])).data, [2.0, 3.0])
        np.testing.assert_array_equal(T.elementwise("scale", x, 2.0).data, [2.0, 4.0])
        np.testing.assert_array_equal(T.elementwise("mul", x, x).data, [1.0, 4.0])
        assert T.elementwise("gelu", x).shape == (2,)
        with pytest.raises(ContractError):
            T.elementwise("tanh", x)

    def test_non_broadcastable_raises(self):
        with pytest.raises(DimensionError):
            T.add(Tensor(np.zeros(3)), Tensor(np.zeros(4)))


class TestSoftmax:
    def test_symmetric_rows(self):
        out = T.softmax_rows(Tensor([[0.0, 0.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-15)

    def test_large_inputs_no_overflow(self):
        out = T.softmax_rows(Tensor([[1000.0, 1000.0]]))
        np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-15)
        assert np.all(np.isfinite(out.data))

    def test_hand_computed_row(self):
        out = T.softmax_rows(Tensor([[0.0, math.log(3.0)]]))
        np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-15)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(4)
        out = T.softmax_rows(Tensor(rng.uniform(-5, 5, (20, 7))))
        np.testing.assert_allclose(out.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_shift_invariance(self):
        rng = np.random.default_rng(5)
        x = rng.uniform(-2, 2, (5, 6))
        a = T.softmax_rows(Tensor(x)).data
        b = T.softmax_rows(Tensor(x + 123.456)).data
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_gradient(self):
        rng = np.random.default_rng(6)
        x = Tensor(rng.uniform(-2, 2, (3, 5)), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, (3, 5)))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.softmax_rows(x), w)), x)

    def test_masked_lanes_get_zero(self):
        x = Tensor([[1.0, 2.0, 50.0]])
        mask = np.array([[True, True, False]])
        out = T.softmax_rows(x, mask=mask)
        assert out.data[0, 2] == 0.0
        np.testing.assert_allclose(out.data.sum(), 1.0, atol=1e-15)

    def test_masked_matches_unmasked_on_valid_lanes(self):
        # Appending masked lanes must not change valid outputs at all.
        rng = np.random.default_rng(7)
        x = rng.uniform(-2, 2, (4, 5))
        base = T.softmax_rows(Tensor(x)).data
        padded = np.concatenate([x, rng.uniform(-2, 2, (4, 2))], axis=1)
        mask = np.concatenate([np.ones((4, 5), bool), np.zeros((4, 2), bool)], axis=1)
        out = T.softmax_rows(Tensor(padded), mask=mask).data
        np.testing.assert_array_equal(out[:, :5], base)

    def test_all_masked_row_rejected(self):
        with pytest.raises(ContractError):
            T.softmax_rows(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


class TestLayerNorm:
    def test_constant_row_is_zeroed(self):
        x = Tensor(np.full((2, 4), 3.7))
        out = T.layer_norm(x, Tensor(np.ones(4)), Tensor(np.zeros(4)))
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)

    def test_already_normalized_row(self):
        x = Tensor([[1.0, -1.0]])
        out = T.layer_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=1e-12)
        np.testing.assert_allclose(out.data, [[1.0, -1.0]], atol=1e-6)

    def test_gradcheck_random(self):
        rng = np.random.default_rng(8)
        x = Tensor(rng.uniform(-2, 2, (4, 8)), requires_grad=True)
        gain = Tensor(rng.uniform(0.5, 1.5, 8), requires_grad=True)
        bias = Tensor(rng.uniform(-0.5, 0.5, 8), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, (4, 8)))

        def f():
            return T.tensor_sum(T.mul(T.layer_norm(x, gain, bias), w))

        assert_grad_matches(f, x, rtol=1e-5)
        assert_grad_matches(f, gain, rtol=1e-5)
        assert_grad_matches(f, bias, rtol=1e-5)

    def test_eps_and_width_contracts(self):
        with pytest.raises(DimensionError):
            T.layer_norm(Tensor([[1.0]]), Tensor([1.0]), Tensor([0.0]))
        with pytest.raises(ContractError):
            T.layer_norm(Tensor([[1.0, 2.0]]), Tensor(np.ones(2)), Tensor(np.zeros(2)), eps=0.0)


class TestShapeOps:
    def test_reshape_transpose_slice_diag_gradients(self):
        rng = np.random.default_rng(9)
        x = Tensor(rng.uniform(-2, 2, (4, 6)), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, (2, 12)))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.reshape(x, (2, 12)), w)), x)
        w2 = Tensor(rng.uniform(-1, 1, (6, 4)))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.transpose(x, (1, 0)), w2)), x)
        w3 = Tensor(rng.uniform(-1, 1, (2, 6)))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.slice_rows(x, 2), w3)), x)
        sq = Tensor(rng.uniform(-2, 2, (5, 5)), requires_grad=True)
        w4 = Tensor(rng.uniform(-1, 1, 5))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.take_diag(sq), w4)), sq)

    def test_embedding_lookup_gradient_scatter_adds(self):
        table = Tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
        ids = np.array([[0, 2, 0]])
        with Tape() as tape:
            out = T.embedding_lookup(table, ids)
            loss = T.tensor_sum(out)
            tape.backward(loss)
        expected = np.zeros((4, 3))
        expected[0] = 2.0  # id 0 gathered twice
        expected[2] = 1.0
        np.testing.assert_array_equal(table.grad, expected)

    def test_logsumexp_rows(self):
        x = Tensor([[0.0, math.log(3.0)]])
        np.testing.assert_allclose(T.logsumexp_rows(x).data, [math.log(4.0)], atol=1e-15)
        single = T.logsumexp_rows(Tensor([[2.5]]))
        assert single.data[0] == 2.5

    def test_logsumexp_gradient(self):
        rng = np.random.default_rng(10)
        x = Tensor(rng.uniform(-2, 2, (3, 6)), requires_grad=True)
        w = Tensor(rng.uniform(-1, 1, 3))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.logsumexp_rows(x), w)), x)

    def test_l2_normalize_rows(self):
        rng = np.random.default_rng(11)
        x = Tensor(rng.uniform(-2, 2, (4, 5)), requires_grad=True)
        out = T.l2_normalize_rows(x)
        np.testing.assert_allclose(np.linalg.norm(out.data, axis=1), 1.0, atol=1e-12)
        w = Tensor(rng.uniform(-1, 1, (4, 5)))
        assert_grad_matches(lambda: T.tensor_sum(T.mul(T.l2_normalize_rows(x), w)), x)
        with pytest.raises(ContractError):
            T.l2_normalize_rows(Tensor([[0.0, 0.0]]))


class TestBackwardContract:
    def test_sum_gradient_is_ones(self):
        x = Tensor(np.random.default_rng(12).uniform(-2, 2, (3, 4)), requires_grad=True)
        with Tape() as tape:
            tape.backward(T.tensor_sum(x))
        np.testing.assert_array_equal(x.grad, np.ones((3, 4)))

    def test_sum_of_squares_gradient(self):
        x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
        with Tape() as tape:
            tape.backward(T.tensor_sum(T.mul(x, x)))
        np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])

    def test_double_backward_is_state_error(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            loss = T.tensor_sum(x)
            tape.backward(loss)
            with pytest.raises(StateError):
                tape.backward(loss)

    def test_non_scalar_loss_is_contract_error(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
            with pytest.raises(ContractError):
                tape.backward(y)

    def test_loss_from_other_tape_rejected(self):
        x = Tensor([1.0], requires_grad=True)
        with Tape() as tape:
            loss = T.tensor_sum(x)
        with Tape() as other:
            T.tensor_sum(x)
            with pytest.raises(ContractError):
                other.backward(loss)

    def test_each_node_visited_exactly_once(self):
        x = Tensor(np.random.default_rng(13).uniform(-1, 1, 6), requires_grad=True)
        with Tape() as tape:
            y = T.mul(x, x)
            z = T.add(y, x)
            loss = T.tensor_sum(T.gelu(z))
            n_nodes = len(tape)
            tape.backward(loss)
        assert tape.nodes_visited == n_nodes
        assert tape.backward_calls <= n_nodes

    def test_no_nan_inf_after_forward_backward(self):
        rng = np.random.default_rng(14)
        x = Tensor(rng.uniform(-2, 2, (5, 6)), requires_grad=True)
        w = Tensor(rng.uniform(-2, 2, (6, 4)), requires_grad=True)
        with Tape() as tape:
            out = T.softmax_rows(T.gelu(T.matmul(x, w)))
            loss = T.tensor_sum(T.mul(out, out))
            tape.backward(loss)
        for t in (x, w, out, loss):
            assert t.is_finite()
        assert np.all(np.isfinite(x.grad)) and np.all(np.isfinite(w.grad))

    def test_gradients_accumulate_across_tapes_until_zeroed(self):
        x = Tensor([1.0, 1.0], requires_grad=True)
        for _ in range(2):
            with Tape() as tape:
                tape.backward(T.tensor_sum(x))
        np.testing.assert_array_equal(x.grad, [2.0, 2.0])
        x.zero_grad()
        assert x.grad is None


class TestGradCheck:
    def test_linear_layer_tight(self):
        rng = np.random.default_rng(15)
        w = Tensor(rng.uniform(-1, 1, (4, 3)), requires_grad=True)
        x = Tensor(rng.uniform(-1, 1, (2, 4)))

        report = grad_check(lambda: T.tensor_sum(T.matmul(x, w)), {"w": w}, h=1e-6, tol=1e-6)
        assert report.passed
        assert report.worst().max_rel_err < 1e-8

    def test_frozen_mask_dropout_passes(self):
        rng = np.random.default_rng(16)
        x = Tensor(rng.uniform(-1, 1, (3, 4)), requires_grad=True)
        mask = Tensor((rng.random((3, 4)) > 0.3) / 0.7)  # constant multiplier

        report = grad_check(lambda: T.tensor_sum(T.mul(x, mask)), {"x": x})
        assert report.passed

    def test_softmax_log_composite(self):
        rng = np.random.default_rng(17)
        x = Tensor(rng.uniform(-1, 1, (2, 5)), requires_grad=True)

        def f():
            return T.tensor_sum(T.logsumexp_rows(T.softmax_rows(x)))

        report = grad_check(f, {"x": x}, tol=1e-6)
        assert report.passed

    def test_corrupted_gradient_rule_fails(self):
        # Negative control: wrong analytic rule must be caught.
        x = Tensor([0.5, 1.5, -0.5], requires_grad=True)

        def bad_square(a):
            data = a.data * a.data

            def backward(g):
                return (g * 3.0 * a.data,)  # wrong factor on purpose

            return T._emit(data, (a,), backward)

        report = grad_check(lambda: T.tensor_sum(bad_square(x)), {"x": x})
        assert not report.passed

    def test_nondeterministic_build_fn_rejected(self):
        rng = np.random.default_rng(18)
        x = Tensor([1.0], requires_grad=True)

        def f():
            return T.scale(T.tensor_sum(x), rng.random())

        with pytest.raises(ContractError):
            grad_check(f, {"x": x})
