import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrotext import autodiff as ad
from surrotext.autodiff import ContractError, ShapeError, Tape

from oracles import check_gradients


def rng(seed=0):
    return np.random.default_rng(seed)


class TestMatmul:
    def test_identity(self):
        a = ad.tensor(np.eye(2))
        b = ad.tensor([[3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(ad.matmul(a, b).data, [[3.0, 4.0], [5.0, 6.0]])

    def test_one_by_one(self):
        out = ad.matmul(ad.tensor([[1.0, 2.0]]), ad.tensor([[3.0], [4.0]]))
        assert out.data.shape == (1, 1)
        assert out.item() == 11.0

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            ad.matmul(ad.tensor(np.zeros((2, 3))), ad.tensor(np.zeros((2, 3))))

    def test_gradient_matches_finite_differences(self):
        r = rng(7)
        a = ad.parameter(r.standard_normal((3, 3)))
        b = ad.parameter(r.standard_normal((3, 3)))

        def forward():
            return float((a.data @ b.data).sum())

        with Tape() as tape:
            loss = ad.tsum(ad.matmul(a, b))
            ad.backward(loss, tape)
        check_gradients(forward, a.data, a.grad, rng(1), tol=1e-4)
        check_gradients(forward, b.data, b.grad, rng(2), tol=1e-4)


class TestElementwise:
    def test_tanh_of_zero(self):
        out = ad.elementwise("tanh", ad.tensor(np.zeros(5)))
        np.testing.assert_array_equal(out.data, np.zeros(5))

    def test_relu_definition(self):
        out = ad.elementwise("relu", ad.tensor([-1.0, 2.0]))
        np.testing.assert_array_equal(out.data, [0.0, 2.0])

    def test_sigmoid_gradient_at_zero(self):
        x = ad.parameter([0.0])
        with Tape() as tape:
            loss = ad.tsum(ad.sigmoid(x))
            ad.backward(loss, tape)
        assert x.grad[0] == pytest.approx(0.25, abs=1e-12)

    def test_binary_broadcast_row_bias(self):
        a = ad.tensor(np.ones((3, 2)))
        b = ad.tensor([10.0, 20.0])
        out = ad.elementwise("add", a, b)
        np.testing.assert_array_equal(out.data, [[11.0, 21.0]] * 3)

    def test_non_broadcastable_shapes_raise(self):
        with pytest.raises(ShapeError):
            ad.add(ad.tensor(np.ones((2, 3))), ad.tensor(np.ones((3, 2))))

    @pytest.mark.parametrize("op", ["add", "mul", "sub"])
    def test_binary_gradients(self, op):
        r = rng(3)
        a = ad.parameter(r.standard_normal((4, 3)))
        b = ad.parameter(r.standard_normal((4, 3)))
        fn = {"add": np.add, "mul": np.multiply, "sub": np.subtract}[op]

        def forward():
            return float(fn(a.data, b.data).sum())

        with Tape() as tape:
            loss = ad.tsum(ad.elementwise(op, a, b))
            ad.backward(loss, tape)
        check_gradients(forward, a.data, a.grad, rng(4))
        check_gradients(forward, b.data, b.grad, rng(5))

    def test_row_bias_gradient_sums_over_rows(self):
        b = ad.parameter([1.0, 2.0])
        a = ad.tensor(np.ones((5, 2)))
        with Tape() as tape:
            loss = ad.tsum(ad.add(a, b))
            ad.backward(loss, tape)
        np.testing.assert_array_equal(b.grad, [5.0, 5.0])


class TestConcat:
    def test_definition(self):
        out = ad.concat([ad.tensor([[1.0], [2.0]]), ad.tensor([[3.0], [4.0]])], axis=1)
        np.testing.assert_array_equal(out.data, [[1.0, 3.0], [2.0, 4.0]])

    def test_single_tensor_identity(self):
        a = ad.tensor([[5.0, 6.0]])
        np.testing.assert_array_equal(ad.concat([a], axis=0).data, a.data)

    def test_ragged_raises(self):
        with pytest.raises(ShapeError):
            ad.concat([ad.tensor(np.ones((2, 2))), ad.tensor(np.ones((3, 2)))], axis=1)

    def test_backward_splits_gradient(self):
        a = ad.parameter(np.ones((2, 2)))
        b = ad.parameter(np.ones((2, 3)))
        with Tape() as tape:
            loss = ad.tsum(ad.concat([a, b], axis=1))
            ad.backward(loss, tape)
        np.testing.assert_array_equal(a.grad, np.ones((2, 2)))
        np.testing.assert_array_equal(b.grad, np.ones((2, 3)))

    def test_gradient_matches_finite_differences(self):
        r = rng(11)
        a = ad.parameter(r.standard_normal((2, 2)))
        b = ad.parameter(r.standard_normal((2, 4)))

        def forward():
            joined = np.concatenate([a.data, b.data], axis=1)
            return float((joined ** 2).sum())

        with Tape() as tape:
            cat = ad.concat([a, b], axis=1)
            loss = ad.tsum(ad.mul(cat, cat))
            ad.backward(loss, tape)
        check_gradients(forward, a.data, a.grad, rng(12))
        check_gradients(forward, b.data, b.grad, rng(13))


class TestEmbeddingGather:
    def test_row_selection(self):
        table = ad.tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(ad.embedding_gather(table, [0]).data, [[1.0, 2.0]])

    def test_repeated_ids_accumulate(self):
        table = ad.parameter([[1.0, 2.0], [3.0, 4.0]])
        with Tape() as tape:
            loss = ad.tsum(ad.embedding_gather(table, [1, 1]))
            ad.backward(loss, tape)
        np.testing.assert_array_equal(table.grad, [[0.0, 0.0], [2.0, 2.0]])

    def test_out_of_range_names_id_and_size(self):
        table = ad.tensor(np.zeros((4, 2)))
        with pytest.raises(IndexError, match="id 9.*4 rows"):
            ad.embedding_gather(table, [0, 9])

    def test_gradient_matches_finite_differences(self):
        r = rng(21)
        table = ad.parameter(r.standard_normal((6, 3)))
        ids = [4, 0, 4, 2]

        def forward():
            return float((table.data[ids] ** 2).sum())

        with Tape() as tape:
            rows = ad.embedding_gather(table, ids)
            loss = ad.tsum(ad.mul(rows, rows))
            ad.backward(loss, tape)
        check_gradients(forward, table.data, table.grad, rng(22))


class TestMseMean:
    def test_zero_residual(self):
        a = ad.tensor([1.0, 2.0])
        assert ad.mse_mean(a, ad.tensor([1.0, 2.0])).item() == 0.0

    def test_hand_value(self):
        out = ad.mse_mean(ad.tensor([0.0, 0.0]), ad.tensor([1.0, 3.0]))
        assert out.item() == pytest.approx(5.0)

    def test_gradient_hand_value(self):
        p = ad.parameter([0.0])
        with Tape() as tape:
            loss = ad.mse_mean(p, ad.tensor([2.0]))
            ad.backward(loss, tape)
        assert p.grad[0] == pytest.approx(-4.0)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            ad.mse_mean(ad.tensor([1.0]), ad.tensor([1.0, 2.0]))


class TestBackwardContract:
    def test_sum_gives_ones(self):
        x = ad.parameter(np.arange(6.0).reshape(2, 3))
        with Tape() as tape:
            ad.backward(ad.tsum(x), tape)
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_two_backward_calls_double(self):
        x = ad.parameter([1.0, 2.0])
        with Tape() as tape:
            loss = ad.tsum(ad.mul(x, x))
            ad.backward(loss, tape)
            first = x.grad.copy()
            ad.backward(loss, tape)
        np.testing.assert_allclose(x.grad, 2.0 * first)

    def test_non_scalar_loss_rejected(self):
        x = ad.parameter([1.0, 2.0])
        with Tape() as tape:
            y = ad.mul(x, x)
            with pytest.raises(ContractError):
                ad.backward(y, tape)

    def test_shared_input_fanout_accumulates(self):
        x = ad.parameter([3.0])
        with Tape() as tape:
            # y = x*x + x  =>  dy/dx = 2x + 1 = 7
            loss = ad.tsum(ad.add(ad.mul(x, x), x))
            ad.backward(loss, tape)
        assert x.grad[0] == pytest.approx(7.0)

    def test_no_tape_means_no_backward(self):
        x = ad.parameter([1.0])
        y = ad.tsum(x)
        with pytest.raises(ContractError):
            ad.backward(y)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits(self):
        logits = ad.tensor(np.zeros((2, 4)))
        out = ad.softmax_cross_entropy(logits, [0, 3])
        assert out.item() == pytest.approx(np.log(4.0))

    def test_gradient_matches_finite_differences(self):
        r = rng(31)
        logits = ad.parameter(r.standard_normal((5, 3)))
        labels = [0, 2, 1, 1, 0]

        def forward():
            z = logits.data - logits.data.max(axis=1, keepdims=True)
            p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
            return float(-np.log(p[np.arange(5), labels]).mean())

        with Tape() as tape:
            loss = ad.softmax_cross_entropy(logits, labels)
            ad.backward(loss, tape)
        check_gradients(forward, logits.data, logits.grad, rng(32))


class TestPurityAndDeterminism:
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_ops_do_not_mutate_inputs(self, seed):
        r = rng(seed)
        a_data = r.standard_normal((3, 4))
        b_data = r.standard_normal((3, 4))
        a, b = ad.tensor(a_data.copy()), ad.tensor(b_data.copy())
        ad.tanh(ad.mul(ad.add(a, b), a))
        np.testing.assert_array_equal(a.data, a_data)
        np.testing.assert_array_equal(b.data, b_data)

    def test_forward_bit_identical_across_runs(self):
        r = rng(5)
        a_data = r.standard_normal((8, 8))

        def run():
            a = ad.tensor(a_data)
            return ad.tanh(ad.matmul(a, a)).data

        first, second = run(), run()
        assert np.array_equal(first, second)


class TestChainThroughRecurrence:
    def test_unrolled_loop_gradcheck(self):
        # 40-step scalar recurrence exercises the longer-unroll tolerance
        r = rng(41)
        w = ad.parameter(r.uniform(0.4, 0.6, size=(1, 1)))
        x_data = r.standard_normal((1, 1))

        def forward():
            h = x_data.copy()
            for _ in range(40):
                h = np.tanh(h @ w.data)
            return float(h.sum())

        with Tape() as tape:
            h = ad.tensor(x_data)
            for _ in range(40):
                h = ad.tanh(ad.matmul(h, w))
            ad.backward(ad.tsum(h), tape)
        check_gradients(forward, w.data, w.grad, rng(42), n_coords=1, tol=1e-3)
