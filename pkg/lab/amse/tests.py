import math
import unittest

import numpy as np
from numpy.testing import assert_allclose
from scipy.special import expit

from dvbe_lab.exceptions import DimensionError, ValidationError
from numerics import Tensor, check_parameters, make_rng

from .embedding import attend_channel, attend_spatial, bilinear_pool, embed
from .losses import adaptive_lambda, ams_loss, classify
from .models import AmseModel, EmbeddingVariant, MarginConfig, MarginMode


def hand_model(channels, reduced, seen=(0, 1), variant=EmbeddingVariant.CROSS_ATTENTIVE, use_normalization=False, **arrays):
    """Model with zero parameters except the ones given."""
    variant = EmbeddingVariant(variant)
    width = reduced ** 2 if variant.second_order else reduced
    shapes = {
        "reduce1_weight": (channels, reduced),
        "reduce1_bias": (reduced,),
        "reduce2_weight": (channels, reduced),
        "reduce2_bias": (reduced,),
        "spatial_weight": (reduced, 1),
        "spatial_bias": (1,),
        "channel_weight": (reduced, reduced),
        "channel_bias": (reduced,),
        "classifier": (len(seen), width),
    }
    params = {name: Tensor(arrays.get(name, np.zeros(shape)), requires_grad=True) for name, shape in shapes.items()}
    return AmseModel(seen_classes=seen, variant=variant, use_normalization=use_normalization, **params)


class BilinearPoolTests(unittest.TestCase):
    def test_orthonormal_rows(self):
        assert_allclose(bilinear_pool(Tensor([[1.0, 0.0], [0.0, 1.0]])).data, np.eye(2))

    def test_single_row_is_outer_product(self):
        assert_allclose(bilinear_pool(Tensor([[1.0, 2.0]])).data, [[1, 2], [2, 4]])

    def test_matches_transpose_product(self):
        x = make_rng(3).normal(size=(3, 4))
        assert_allclose(bilinear_pool(Tensor(x)).data, x.T @ x, atol=1e-12)

    def test_symmetric_positive_semidefinite(self):
        rng = make_rng(4)
        for _ in range(20):
            pooled = bilinear_pool(Tensor(rng.normal(size=(4, 6)))).data
            assert_allclose(pooled, pooled.T, atol=1e-12)
            self.assertGreaterEqual(np.linalg.eigvalsh(pooled).min(), -1e-10)


class AttentionTests(unittest.TestCase):
    x = np.array([[1.0, 2.0, 3.0], [0.0, 1.0, -1.0]])

    def test_zero_weights_give_half_gates(self):
        model = hand_model(3, 3)
        assert_allclose(attend_spatial(Tensor(self.x), model).data, np.full((2, 1), 0.5))
        assert_allclose(attend_channel(Tensor(self.x), model).data, np.full((1, 3), 0.5))

    def test_saturated_bias_passes_through(self):
        model = hand_model(3, 3, spatial_bias=[60.0], channel_bias=[60.0] * 3)
        assert_allclose(attend_spatial(Tensor(self.x), model).data, np.ones((2, 1)))
        assert_allclose(attend_channel(Tensor(self.x), model).data, np.ones((1, 3)))

    def test_spatial_hand_computed(self):
        model = hand_model(3, 3, spatial_weight=[[0.5], [-1.0], [0.25]], spatial_bias=[0.1])
        assert_allclose(attend_spatial(Tensor(self.x), model).data, expit([[-0.65], [-1.15]]), atol=1e-15)

    def test_channel_hand_computed(self):
        model = hand_model(3, 3, channel_weight=np.eye(3), channel_bias=[0.0, 0.0, -1.0])
        assert_allclose(attend_channel(Tensor(self.x), model).data, expit([[0.5, 1.5, 0.0]]), atol=1e-15)


class EmbedTests(unittest.TestCase):
    def test_pinned_gates_reduce_to_plain_bilinear(self):
        x = make_rng(5).normal(size=(2, 3, 4))
        model = hand_model(
            4, 4,
            reduce1_weight=np.eye(4), reduce2_weight=np.eye(4),
            spatial_bias=[60.0], channel_bias=[60.0] * 4,
        )
        branch = np.maximum(x.reshape(6, 4), 0.0)
        assert_allclose(embed(Tensor(x), model).data, bilinear_pool(Tensor(branch)).data.reshape(-1), atol=1e-9)

    def test_single_position_hand_computed(self):
        model = hand_model(2, 2, reduce1_weight=np.eye(2), reduce2_weight=2 * np.eye(2))
        # x1 = [1, 2], x2 = [2, 4], all gates 0.5
        out = embed(Tensor([[[1.0, 2.0]]]), model).data
        assert_allclose(out, [0.5, 1.0, 1.0, 2.0], atol=1e-15)

    def test_normalized_output_has_unit_norm(self):
        rng = make_rng(6)
        model = AmseModel.initialize(rng, channels=6, reduced_dim=3, seen_classes=[0, 1, 2])
        for _ in range(5):
            out = embed(Tensor(rng.normal(size=(3, 3, 6))), model).data
            self.assertAlmostEqual(float(np.linalg.norm(out)), 1.0, delta=1e-12)

    def test_batched_matches_single(self):
        rng = make_rng(7)
        model = AmseModel.initialize(rng, channels=5, reduced_dim=3, seen_classes=[0, 1])
        x = rng.normal(size=(4, 2, 2, 5))
        batch = embed(Tensor(x), model).data
        for index in range(4):
            assert_allclose(batch[index], embed(Tensor(x[index]), model).data, atol=1e-12)

    def test_channel_mismatch(self):
        model = hand_model(3, 2)
        with self.assertRaises(DimensionError):
            embed(Tensor(np.zeros((2, 2, 4))), model)

    def test_variant_widths(self):
        rng = make_rng(8)
        x = Tensor(rng.normal(size=(2, 2, 6)))
        for variant in EmbeddingVariant:
            model = AmseModel.initialize(rng, 6, 3, [0, 1], variant=variant)
            expected = 3 if variant is EmbeddingVariant.FIRST_ORDER else 9
            self.assertEqual(embed(x, model).shape, (expected,))
            self.assertEqual(model.classifier.shape, (2, expected))

    def test_reduced_width_above_channels(self):
        with self.assertRaises(ValidationError):
            AmseModel.initialize(make_rng(0), channels=2, reduced_dim=3, seen_classes=[0])


class AdaptiveLambdaTests(unittest.TestCase):
    def test_confident_sample(self):
        self.assertEqual(adaptive_lambda(1.0, 0.5), 1.0)

    def test_half_probability(self):
        self.assertAlmostEqual(adaptive_lambda(0.5, 0.5), math.exp(-1.0), places=12)

    def test_strictly_increasing(self):
        values = adaptive_lambda(np.linspace(0.0, 1.0, 1000), 0.5)
        self.assertTrue(np.all(np.diff(values) > 0))
        self.assertTrue(np.all((values > 0) & (values <= 1)))

    def test_out_of_range(self):
        with self.assertRaises(ValidationError):
            adaptive_lambda(1.5, 0.5)
        with self.assertRaises(ValidationError):
            adaptive_lambda(0.5, 0.0)


def two_class_model():
    return hand_model(1, 1, variant=EmbeddingVariant.FIRST_ORDER, classifier=[[2.0], [0.5]])


class AmsLossTests(unittest.TestCase):
    def test_standard_mode_is_cross_entropy(self):
        rng = make_rng(9)
        model = hand_model(1, 1, seen=(0, 1, 2), variant=EmbeddingVariant.FIRST_ORDER, classifier=rng.normal(size=(3, 1)))
        features = rng.normal(size=(5, 1))
        labels = np.array([0, 2, 1, 1, 0])
        z = features @ model.classifier.data.T
        expected = np.mean([-(z[i, labels[i]] - np.log(np.exp(z[i]).sum())) for i in range(5)])
        loss = ams_loss(features, labels, model, MarginConfig(mode=MarginMode.STANDARD)).item()
        self.assertAlmostEqual(loss, expected, delta=1e-12)

    def test_fixed_lambda_hand_computed(self):
        loss = ams_loss(np.array([[1.0]]), [0], two_class_model(), MarginConfig(mode="fixed", fixed_lambda=0.8)).item()
        # centered logits are (0.75, -0.75)
        expected = -math.log(math.exp(0.6) / (math.exp(0.6) + math.exp(-0.75)))
        self.assertAlmostEqual(loss, expected, delta=1e-12)

    def test_margin_penalizes_positive_target(self):
        model = two_class_model()
        standard = ams_loss(np.array([[1.0]]), [0], model, MarginConfig(mode="standard")).item()
        for lam in (0.9, 0.5, 0.1):
            margined = ams_loss(np.array([[1.0]]), [0], model, MarginConfig(mode="fixed", fixed_lambda=lam)).item()
            self.assertGreater(margined, standard)

    def test_adaptive_lambda_from_unscaled_probability(self):
        model = two_class_model()
        p_y = expit(1.5)
        lam = adaptive_lambda(p_y, 0.5)
        loss = ams_loss(np.array([[1.0]]), [0], model, MarginConfig(mode="adaptive", sigma=0.5)).item()
        expected = -math.log(math.exp(0.75 * lam) / (math.exp(0.75 * lam) + math.exp(-0.75)))
        self.assertAlmostEqual(loss, expected, delta=1e-12)

    def test_label_outside_seen_classes(self):
        with self.assertRaises(ValidationError):
            ams_loss(np.array([[1.0]]), [5], two_class_model(), MarginConfig())

    def test_common_logit_shift_leaves_loss_unchanged(self):
        rng = make_rng(14)
        classifier = rng.normal(size=(3, 2))
        features = np.abs(rng.normal(size=(4, 2)))
        labels = [0, 2, 1, 1]
        for mode in ("standard", "fixed", "adaptive"):
            margin = MarginConfig(mode=mode, fixed_lambda=0.6, sigma=0.5)
            base = ams_loss(features, labels, hand_model(2, 2, seen=(0, 1, 2), variant="first_order", classifier=classifier), margin).item()
            for offset in (-4.0, 3.0):
                # same direction added to every row shifts each sample's logits by one constant
                shifted = classifier + offset * np.array([1.0, 1.0])
                moved = ams_loss(features, labels, hand_model(2, 2, seen=(0, 1, 2), variant="first_order", classifier=shifted), margin).item()
                self.assertAlmostEqual(moved, base, delta=1e-10, msg=f"{mode} offset {offset}")

    def test_negative_logits_cannot_drive_loss_to_zero(self):
        model = hand_model(1, 1, seen=(0, 1, 2, 3), variant="first_order", classifier=[[-6.0], [-6.0], [-6.0], [-6.0]])
        for margin in (MarginConfig(mode="adaptive", sigma=0.5), MarginConfig(mode="fixed", fixed_lambda=0.1)):
            loss = ams_loss(np.array([[2.0]]), [1], model, margin).item()
            self.assertAlmostEqual(loss, math.log(4.0), delta=1e-12)

    def test_gradients_against_finite_differences(self):
        for seed in range(5):
            rng = make_rng(seed, 11)
            model = AmseModel.initialize(rng, channels=4, reduced_dim=3, seen_classes=[0, 1, 2], use_normalization=False)
            x = rng.normal(size=(3, 2, 2, 4))
            labels = [0, 2, 1]
            margin = MarginConfig(mode="fixed", fixed_lambda=0.7)
            report = check_parameters(lambda: ams_loss(embed(Tensor(x), model), labels, model, margin), model.parameters())
            self.assertTrue(report.passed(1e-4), f"seed {seed}: {report.worst()} {report.max_error:.2e}")

    def test_gradients_with_normalization(self):
        rng = make_rng(12)
        model = AmseModel.initialize(rng, channels=4, reduced_dim=2, seen_classes=[0, 1], signed_sqrt_eps=1e-2)
        x = rng.normal(size=(2, 2, 2, 4))
        margin = MarginConfig(mode="standard")
        report = check_parameters(lambda: ams_loss(embed(Tensor(x), model), [1, 0], model, margin), model.parameters())
        self.assertTrue(report.passed(1e-4), f"{report.worst()} {report.max_error:.2e}")


class ClassifyTests(unittest.TestCase):
    def test_uniform_logits(self):
        model = hand_model(1, 1, seen=(0, 1, 2, 3), variant="first_order")
        assert_allclose(classify(Tensor([1.0]), model).data, [0.25] * 4, atol=1e-15)

    def test_two_class_hand_computed(self):
        probs = classify(Tensor([1.0]), two_class_model()).data
        assert_allclose(probs, [expit(1.5), expit(-1.5)], atol=1e-15)

    def test_probabilities_invariant_under_common_shift(self):
        rng = make_rng(13)
        classifier = rng.normal(size=(3, 2))
        feature = Tensor(np.abs(rng.normal(size=2)) + 0.1)
        base = classify(feature, hand_model(2, 2, seen=(0, 1, 2), variant="first_order", classifier=classifier)).data
        shifted = classify(feature, hand_model(2, 2, seen=(0, 1, 2), variant="first_order", classifier=classifier + 5.0)).data
        assert_allclose(shifted, base, atol=1e-12)
        self.assertEqual(np.argmax(shifted), np.argmax(base))
