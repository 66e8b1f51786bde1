import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from dvbe_lab.exceptions import DimensionError, NumericError, ValidationError

from . import ops
from .gradcheck import check_parameters, grad_check
from .rng import make_rng, msra_mirrored
from .tensor import Tensor, no_grad


class MatmulTests(unittest.TestCase):
    def test_identity(self):
        out = ops.matmul(Tensor([[1, 0], [0, 1]]), Tensor([[3, 4], [5, 6]]))
        assert_array_equal(out.data, [[3, 4], [5, 6]])

    def test_hand_expansion(self):
        out = ops.matmul(Tensor([[1, 2]]), Tensor([[3], [4]]))
        assert_array_equal(out.data, [[11]])

    def test_zeros_annihilate(self):
        rng = make_rng(0)
        out = ops.matmul(Tensor(np.zeros((2, 3))), Tensor(rng.normal(size=(3, 2))))
        assert_array_equal(out.data, np.zeros((2, 2)))

    def test_shape_mismatch_names_both_shapes(self):
        with self.assertRaises(DimensionError) as ctx:
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))
        self.assertIn("(2, 3)", str(ctx.exception))
        self.assertEqual(ctx.exception.shapes, ((2, 3), (2, 3)))

    def test_batched_against_shared_weight(self):
        rng = make_rng(1)
        a = rng.normal(size=(4, 5, 3))
        w = Tensor(rng.normal(size=(3, 2)), requires_grad=True)
        error = check_parameters(lambda: ops.sum(ops.matmul(Tensor(a), w)), {"w": w}).max_error
        self.assertLess(error, 1e-6)


class SoftmaxTests(unittest.TestCase):
    def test_uniform(self):
        assert_allclose(ops.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_closed_form(self):
        assert_allclose(ops.softmax(Tensor([math.log(2), 0.0])).data, [2 / 3, 1 / 3], atol=1e-15)

    def test_large_logits_do_not_overflow(self):
        out = ops.softmax(Tensor([1000.0, 0.0])).data
        self.assertAlmostEqual(out[0], 1.0, places=12)
        self.assertGreaterEqual(out[1], 0.0)
        self.assertAlmostEqual(out.sum(), 1.0, places=12)

    def test_sums_to_one(self):
        rng = make_rng(2)
        for _ in range(50):
            z = rng.normal(scale=1e3, size=rng.integers(1, 20))
            self.assertLess(abs(ops.softmax(Tensor(z)).data.sum() - 1.0), 1e-12)

    def test_empty_input(self):
        with self.assertRaises(DimensionError):
            ops.softmax(Tensor(np.zeros(0)))

    def test_log_softmax_matches_log_of_softmax(self):
        z = Tensor([[0.3, -1.2, 2.0], [5.0, 5.0, -5.0]])
        assert_allclose(ops.log_softmax(z).data, np.log(ops.softmax(z).data), atol=1e-12)


class ElementwiseTests(unittest.TestCase):
    def test_relu_and_sigmoid(self):
        assert_array_equal(ops.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
        assert_allclose(ops.sigmoid(Tensor([0.0])).data, [0.5])

    def test_l2_normalize_has_unit_norm(self):
        out = ops.l2_normalize(Tensor([[3.0, 4.0], [1.0, 0.0]]))
        assert_allclose(np.linalg.norm(out.data, axis=-1), [1.0, 1.0], atol=1e-15)

    def test_sum_rows(self):
        assert_array_equal(ops.sum_rows(Tensor([[1.0, 2.0], [3.0, 4.0]])).data, [4.0, 6.0])

    def test_bilinear_matches_transpose_product(self):
        rng = make_rng(3)
        a, b = rng.normal(size=(5, 3)), rng.normal(size=(5, 4))
        assert_allclose(ops.bilinear(Tensor(a), Tensor(b)).data, a.T @ b, atol=1e-12)

    def test_non_finite_result_raises(self):
        with self.assertRaises(NumericError):
            ops.exp(Tensor([1e4]))

    def test_pure(self):
        x = Tensor([0.2, -0.7, 1.3])
        first = ops.softmax(ops.sigmoid(x)).data
        second = ops.softmax(ops.sigmoid(x)).data
        assert_array_equal(first, second)


class BackwardTests(unittest.TestCase):
    def test_shared_subexpression_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        y = ops.mul(x, x)
        ops.sum(ops.add(y, x)).backward()
        assert_allclose(x.grad, [5.0])

    def test_no_grad_records_nothing(self):
        x = Tensor([1.0], requires_grad=True)
        with no_grad():
            y = ops.mul(x, x)
        self.assertFalse(y.requires_grad)


class GradCheckTests(unittest.TestCase):
    def test_square(self):
        error = grad_check(lambda x: ops.sum(ops.mul(x, x)), Tensor([3.0]), step=1e-5)
        self.assertLess(error, 1e-8)

    def test_constant_function(self):
        self.assertEqual(grad_check(lambda x: Tensor(4.0), Tensor([1.0, 2.0])), 0.0)

    def test_non_finite_value_raises(self):
        with self.assertRaises(NumericError):
            grad_check(lambda x: ops.sum(ops.log(x)), Tensor([1e-7]), step=1e-5)

    def test_step_must_be_positive(self):
        with self.assertRaises(ValidationError):
            grad_check(lambda x: ops.sum(x), Tensor([1.0]), step=0.0)

    def test_requires_grad_flags_restored(self):
        frozen, live = Tensor([1.0, 2.0]), Tensor([0.5], requires_grad=True)
        check_parameters(lambda: ops.sum(ops.mul(frozen, live)), {"frozen": frozen, "live": live})
        self.assertFalse(frozen.requires_grad)
        self.assertTrue(live.requires_grad)

    def test_requires_grad_flags_restored_after_failure(self):
        frozen = Tensor([1e-7])
        with self.assertRaises(NumericError):
            check_parameters(lambda: ops.sum(ops.log(frozen)), {"frozen": frozen}, step=1e-5)
        self.assertFalse(frozen.requires_grad)

    def test_every_trainable_kernel(self):
        kernels = {
            "relu": lambda x: ops.sum(ops.mul(ops.relu(x), x)),
            "sigmoid": lambda x: ops.sum(ops.sigmoid(x)),
            "softmax": lambda x: ops.sum(ops.mul(ops.softmax(x), Tensor(np.arange(12.0).reshape(3, 4)))),
            "log_softmax": lambda x: ops.sum(ops.mul(ops.log_softmax(x), Tensor(np.arange(12.0).reshape(3, 4)))),
            "l2_normalize": lambda x: ops.sum(ops.mul(ops.l2_normalize(x), Tensor(np.arange(12.0).reshape(3, 4)))),
            "signed_sqrt": lambda x: ops.sum(ops.signed_sqrt(ops.add(ops.mul(x, x), 0.5))),
            "bilinear": lambda x: ops.sum(ops.mul(ops.bilinear(x, ops.exp(x)), ops.bilinear(x, x))),
            "transpose": lambda x: ops.sum(ops.matmul(ops.transpose(x), x)),
            "mean": lambda x: ops.sum(ops.mul(ops.mean(x, axis=0), ops.mean(x, axis=1, keepdims=True))),
            "sum_rows": lambda x: ops.sum(ops.exp(ops.sum_rows(x))),
        }
        for seed in range(5):
            rng = make_rng(seed)
            point = Tensor(rng.uniform(-1.0, 1.0, size=(3, 4)))
            for name, kernel in kernels.items():
                with self.subTest(kernel=name, seed=seed):
                    self.assertLess(grad_check(kernel, point, step=1e-5), 1e-4)


class RngTests(unittest.TestCase):
    def test_same_seed_same_draws(self):
        assert_array_equal(make_rng(7).normal(size=10), make_rng(7).normal(size=10))

    def test_streams_are_independent(self):
        self.assertFalse(np.array_equal(make_rng(7, 1).normal(size=5), make_rng(7, 2).normal(size=5)))

    def test_mirrored_columns_keep_a_relu_unit_active(self):
        rng = make_rng(8)
        weight = msra_mirrored(rng, (6, 5))
        self.assertEqual(weight.shape, (6, 5))
        assert_array_equal(weight[:, 3:], -weight[:, :2])
        inputs = rng.normal(size=(200, 6)) * 10.0
        hidden = ops.relu(ops.add(ops.matmul(inputs, weight), 0.1)).data
        self.assertTrue(np.all(hidden.max(axis=1) > 0))


if __name__ == "__main__":
    unittest.main()
