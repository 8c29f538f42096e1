import numpy as np
from django.test import SimpleTestCase

from snn.exceptions import GraphError, ShapeError
from snn.tensor import Tensor, identity, log_softmax, matmul, no_grad, stack

from .utils import assert_grad_close, numeric_grad


class MatmulTests(SimpleTestCase):
    def test_identity_product(self):
        out = matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[3], [4]])

    def test_row_times_column(self):
        out = matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
        np.testing.assert_array_equal(out.data, [[11]])

    def test_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(ShapeError) as ctx:
            matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        self.assertIn('(2, 3) @ (2, 3)', str(ctx.exception))

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal((4, 4))
        b = rng.standard_normal((4, 4))

        def loss():
            return float(matmul(Tensor(a), Tensor(b)).sum().item())

        ta, tb = Tensor(a, requires_grad=True), Tensor(b, requires_grad=True)
        matmul(ta, tb).sum().backward()
        assert_grad_close(ta.grad, numeric_grad(loss, a), rtol=1e-4)
        assert_grad_close(tb.grad, numeric_grad(loss, b), rtol=1e-4)


class BackwardTests(SimpleTestCase):
    def test_sum_gives_ones(self):
        w = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        w.sum().backward()
        np.testing.assert_array_equal(w.grad, np.ones((2, 3)))

    def test_square_gives_twice_input(self):
        data = np.array([1.5, -2.0, 0.25])
        w = Tensor(data, requires_grad=True)
        (w * w).sum().backward()
        np.testing.assert_array_equal(w.grad, 2 * data)

    def test_non_scalar_loss_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        with self.assertRaises(GraphError):
            (w * 2.0).backward()

    def test_consumed_graph_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        loss = (w * w).sum()
        loss.backward()
        with self.assertRaises(GraphError):
            loss.backward()

    def test_second_loss_through_consumed_intermediate_rejected(self):
        w = Tensor(np.ones(3), requires_grad=True)
        hidden = w * 2.0
        hidden.sum().backward()
        with self.assertRaises(GraphError):
            (hidden * 3.0).sum().backward()
        np.testing.assert_array_equal(w.grad, [2.0, 2.0, 2.0])
        self.assertIsNone(hidden.grad)

    def test_leaf_flag(self):
        w = Tensor(np.ones(2), requires_grad=True)
        self.assertTrue(w.is_leaf)
        self.assertFalse((w * 2.0).is_leaf)

    def test_accumulation_is_additive(self):
        data = np.array([0.5, -1.0])
        w = Tensor(data, requires_grad=True)
        (w * 3.0).sum().backward()
        (w * w).sum().backward()
        np.testing.assert_allclose(w.grad, 3.0 + 2 * data)

    def test_shared_subexpression_visited_once(self):
        w = Tensor(np.array([2.0]), requires_grad=True)
        y = w * w
        (y + y).sum().backward()
        np.testing.assert_allclose(w.grad, [8.0])

    def test_broadcast_gradient_is_reduced(self):
        x = Tensor(np.ones((3, 4)), requires_grad=True)
        b = Tensor(np.ones(4), requires_grad=True)
        (x + b).sum().backward()
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_no_grad_records_nothing(self):
        w = Tensor(np.ones(2), requires_grad=True)
        with no_grad():
            out = (w * w).sum()
        self.assertFalse(out.requires_grad)
        with self.assertRaises(GraphError):
            out.backward()

    def test_determinism(self):
        rng = np.random.default_rng(3)
        a = rng.standard_normal((3, 5)).astype(np.float32)
        grads = []
        for _ in range(2):
            t = Tensor(a.copy(), requires_grad=True)
            log_softmax(t @ Tensor(a.T)).sum().backward()
            grads.append(t.grad)
        np.testing.assert_array_equal(grads[0], grads[1])


class OpGradientTests(SimpleTestCase):
    def test_indexing_stack_and_log_softmax(self):
        rng = np.random.default_rng(1)
        a = rng.standard_normal((3, 4))
        labels = np.array([0, 3, 1])

        def build(t):
            rows = stack([t[i] for i in range(3)], axis=0)
            return -log_softmax(rows, axis=-1)[np.arange(3), labels].sum()

        t = Tensor(a, requires_grad=True)
        build(t).backward()
        assert_grad_close(t.grad, numeric_grad(lambda: float(build(Tensor(a)).item()), a))

    def test_identity_passes_gradient(self):
        t = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (identity(t) * 3.0).sum().backward()
        np.testing.assert_array_equal(t.grad, [3.0, 3.0])

    def test_float32_by_default(self):
        self.assertEqual(Tensor([1, 2]).dtype, np.float32)
        self.assertEqual(Tensor(np.zeros(2)).dtype, np.float64)
