import numpy as np
from django.test import SimpleTestCase

from snn import functional as F
from snn.exceptions import ShapeError, SpecError, StateError
from snn.tensor import Tensor

from .utils import assert_grad_close, numeric_grad


class Conv2dTests(SimpleTestCase):
    def test_all_ones(self):
        out = F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 3, 3))))
        np.testing.assert_array_equal(out.data, [[[[9.0]]]])

    def test_delta_kernel_is_identity(self):
        x = np.random.default_rng(0).standard_normal((2, 1, 5, 5))
        kernel = np.zeros((1, 1, 3, 3))
        kernel[0, 0, 1, 1] = 1.0
        out = F.conv2d(Tensor(x), Tensor(kernel), padding=1)
        np.testing.assert_allclose(out.data, x)

    def test_output_size_with_stride(self):
        out = F.conv2d(Tensor(np.ones((1, 2, 7, 7))), Tensor(np.ones((3, 2, 3, 3))), stride=2)
        self.assertEqual(out.shape, (1, 3, 3, 3))

    def test_kernel_larger_than_padded_input(self):
        with self.assertRaises(ShapeError):
            F.conv2d(Tensor(np.ones((1, 1, 3, 3))), Tensor(np.ones((1, 1, 5, 5))))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((2, 2, 5, 5))
        w = rng.standard_normal((3, 2, 3, 3))

        def loss():
            return float((F.conv2d(Tensor(x), Tensor(w), padding=1) ** 2).sum().item())

        tx, tw = Tensor(x, requires_grad=True), Tensor(w, requires_grad=True)
        (F.conv2d(tx, tw, padding=1) ** 2).sum().backward()
        assert_grad_close(tx.grad, numeric_grad(loss, x))
        assert_grad_close(tw.grad, numeric_grad(loss, w))


class MaxPoolTests(SimpleTestCase):
    def test_window_maximum(self):
        out = F.maxpool2d(Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]])), 2)
        np.testing.assert_array_equal(out.data, [[[[4.0]]]])

    def test_ties_route_to_first_element(self):
        x = Tensor(np.full((1, 1, 4, 4), 0.5), requires_grad=True)
        out = F.maxpool2d(x, 2)
        np.testing.assert_array_equal(out.data, np.full((1, 1, 2, 2), 0.5))
        out.sum().backward()
        expected = np.zeros((4, 4))
        expected[::2, ::2] = 1.0
        np.testing.assert_array_equal(x.grad[0, 0], expected)

    def test_non_divisible_input(self):
        with self.assertRaises(ShapeError):
            F.maxpool2d(Tensor(np.ones((1, 1, 5, 4))), 2)

    def test_gradient_matches_finite_differences(self):
        # distinct values spaced well beyond the step, so no ties
        x = np.random.default_rng(2).permutation(16).reshape(1, 1, 4, 4).astype(np.float64) * 0.1

        def loss():
            return float((F.maxpool2d(Tensor(x), 2) ** 2).sum().item())

        tx = Tensor(x, requires_grad=True)
        (F.maxpool2d(tx, 2) ** 2).sum().backward()
        assert_grad_close(tx.grad, numeric_grad(loss, x))


class BatchNormTests(SimpleTestCase):
    def setUp(self):
        self.gamma = Tensor(np.ones(3))
        self.beta = Tensor(np.zeros(3))

    def test_standardized_input_passes_through(self):
        x = np.random.default_rng(0).standard_normal((64, 3))
        x = (x - x.mean(0)) / x.std(0)
        out = F.batchnorm(Tensor(x), self.gamma, self.beta, F.RunningStats(3))
        np.testing.assert_allclose(out.data, x, atol=1e-4)

    def test_constant_channel_gives_beta(self):
        beta = Tensor(np.array([0.5, -1.0, 2.0]))
        out = F.batchnorm(Tensor(np.full((4, 3, 2, 2), 7.0)), self.gamma, beta, F.RunningStats(3))
        np.testing.assert_allclose(out.data, np.broadcast_to(beta.data.reshape(1, 3, 1, 1), (4, 3, 2, 2)), atol=1e-6)

    def test_training_statistics(self):
        x = np.random.default_rng(1).normal(3.0, 2.0, size=(16, 3, 4, 4)).astype(np.float32)
        out = F.batchnorm(Tensor(x), Tensor(np.ones(3, np.float32)), Tensor(np.zeros(3, np.float32)),
                          F.RunningStats(3)).data
        self.assertTrue(np.all(np.abs(out.mean(axis=(0, 2, 3))) < 1e-5))
        self.assertTrue(np.all(np.abs(out.var(axis=(0, 2, 3)) - 1.0) < 1e-3))

    def test_running_stats_update_with_momentum(self):
        stats = F.RunningStats(1)
        x = np.array([[1.0], [3.0]])
        F.batchnorm(Tensor(x), Tensor(np.ones(1)), Tensor(np.zeros(1)), stats)
        np.testing.assert_allclose(stats.mean, [0.2])
        np.testing.assert_allclose(stats.var, [0.9 + 0.1 * 2.0])
        self.assertEqual(stats.tracked, 1)

    def test_eval_before_training_update(self):
        with self.assertRaises(StateError):
            F.batchnorm(Tensor(np.ones((2, 3))), self.gamma, self.beta, F.RunningStats(3), training=False)

    def test_channel_mismatch(self):
        with self.assertRaises(ShapeError):
            F.batchnorm(Tensor(np.ones((2, 4))), self.gamma, self.beta, F.RunningStats(3))

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal((4, 3, 2, 2))
        gamma = rng.standard_normal(3)
        beta = rng.standard_normal(3)
        weights = rng.standard_normal((4, 3, 2, 2))

        def build(tx, tg, tb):
            return (F.batchnorm(tx, tg, tb, F.RunningStats(3)) * Tensor(weights)).sum()

        def loss():
            return float(build(Tensor(x), Tensor(gamma), Tensor(beta)).item())

        tx, tg, tb = (Tensor(a, requires_grad=True) for a in (x, gamma, beta))
        build(tx, tg, tb).backward()
        assert_grad_close(tx.grad, numeric_grad(loss, x), atol=1e-5)
        assert_grad_close(tg.grad, numeric_grad(loss, gamma))
        assert_grad_close(tb.grad, numeric_grad(loss, beta))


class DropoutTests(SimpleTestCase):
    def test_zero_probability_is_identity(self):
        x = Tensor(np.arange(5.0))
        self.assertIs(F.dropout(x, 0.0, True, np.random.default_rng(0)), x)

    def test_eval_is_identity(self):
        x = Tensor(np.arange(5.0))
        self.assertIs(F.dropout(x, 0.9, False, np.random.default_rng(0)), x)

    def test_zero_fraction_and_scaling(self):
        out = F.dropout(Tensor(np.ones(1_000_000, np.float32)), 0.25, True, np.random.default_rng(7)).data
        self.assertAlmostEqual(float((out == 0).mean()), 0.25, delta=0.02)
        np.testing.assert_allclose(out[out != 0], 1.0 / 0.75, rtol=1e-6)

    def test_probability_out_of_range(self):
        for p in (-0.1, 1.0):
            with self.assertRaises(SpecError):
                F.dropout(Tensor(np.ones(3)), p, True, np.random.default_rng(0))
