import math
import tempfile
import unittest
from pathlib import Path

import attrs
import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from autos2v.inference import predict_generalized
from dataio.models import Domain, SynthConfig
from dataio.synth import synth_gzsl
from dvbe_lab.exceptions import ValidationError
from metrics.services import mca
from numerics import make_rng
from trainer.tasks import init_models

from .models import GateConfig
from .serializers import read_entropy_histogram, write_entropy_histogram
from .services import (
    HISTOGRAM_COLUMNS,
    branch_scores,
    calibrate_tau,
    classifier_accuracy,
    entropy,
    entropy_statistics,
    evaluate,
    evaluate_generalized,
    gated_predict,
    seen_probabilities,
    split_entropies,
    tau_sweep,
)


class EntropyTests(unittest.TestCase):
    def test_one_hot_is_zero(self):
        self.assertEqual(entropy([0.0, 1.0, 0.0]), 0.0)

    def test_uniform_is_log_k(self):
        for k in (2, 7, 50):
            self.assertAlmostEqual(entropy(np.full(k, 1.0 / k)), math.log(k), places=12)

    def test_zero_entries_ignored(self):
        self.assertAlmostEqual(entropy([0.5, 0.5, 0.0, 0.0]), math.log(2), places=12)

    def test_bounds_on_random_distributions(self):
        rng = make_rng(0, 31)
        for _ in range(1000):
            k = int(rng.integers(2, 51))
            probs = rng.dirichlet(np.full(k, rng.uniform(0.05, 5.0)))
            h = entropy(probs / probs.sum())
            self.assertGreaterEqual(h, 0.0)
            self.assertLessEqual(h, math.log(k) + 1e-12)

    def test_rows(self):
        assert_allclose(entropy(np.array([[1.0, 0.0], [0.5, 0.5]])), [0.0, math.log(2)])

    def test_invalid_distributions(self):
        for probs in ([], [0.2, 0.2], [1.5, -0.5], [np.nan, 1.0]):
            with self.assertRaises(ValidationError):
                entropy(probs)


class CalibrateTauTests(unittest.TestCase):
    def test_linear_interpolation(self):
        self.assertAlmostEqual(calibrate_tau([1.0, 2.0, 3.0, 4.0], 50), 2.5)

    def test_constant_entropies(self):
        self.assertEqual(calibrate_tau([0.7] * 5, 95), 0.7)

    def test_full_percentile_is_max(self):
        self.assertEqual(calibrate_tau([0.3, 1.2, 0.9], 100), 1.2)

    def test_empty_list(self):
        with self.assertRaises(ValidationError):
            calibrate_tau([], 95)

    def test_percentile_out_of_range(self):
        with self.assertRaises(ValidationError):
            calibrate_tau([1.0], 101)


class GateConfigTests(unittest.TestCase):
    def test_defaults(self):
        config = GateConfig()
        self.assertEqual((config.tau, config.calibration_percentile), (1.0, 95.0))

    def test_invalid(self):
        for kwargs in ({"tau": -0.1}, {"tau": float("inf")}, {"calibration_percentile": 0}):
            with self.assertRaises(ValueError):
                GateConfig(**kwargs)


class GateFixtureMixin:
    @classmethod
    def setUpClass(cls):
        cls.dataset = synth_gzsl(SynthConfig(
            n_seen=3, n_unseen=2, attr_dim=5, feat_dims=(2, 2, 6), samples_per_class=8, seed=5,
        ))
        cls.models = init_models(cls.dataset, 4, reduced_dim=3, embed_dim=4, n_nodes=2, top_k=2)
        cls.attributes = cls.dataset.attribute_matrix(cls.models.s2v.class_ids)
        seen = cls.dataset.stack("test_seen")
        cls.scores = branch_scores(
            seen.features, seen.labels, cls.models.amse, cls.models.s2v, cls.attributes, cls.dataset.sorted_unseen
        )


class RoutingTests(GateFixtureMixin, unittest.TestCase):
    def test_open_gate_matches_classifier(self):
        report = evaluate(self.dataset, self.models, GateConfig(tau=1e9))
        self.assertEqual(report.mca_s, classifier_accuracy(self.dataset, self.models.amse, "test_seen"))
        self.assertEqual(report.r_s, 100.0)
        self.assertEqual(report.r_u, 0.0)

    def test_infinite_threshold_routes_everything_seen(self):
        routed = self.scores.route(math.inf)
        self.assertEqual(routed.routed_seen, len(self.scores.labels))
        assert_array_equal(routed.class_ids, self.scores.seen_predictions)

    def test_threshold_below_minimum_routes_everything_unseen(self):
        routed = self.scores.route(-math.inf)
        self.assertEqual(routed.routed_seen, 0)
        assert_array_equal(routed.class_ids, self.scores.unseen_predictions)
        below = float(self.scores.entropies.min()) / 2
        self.assertEqual(self.scores.route(below).routed_seen, 0)

    def test_boundary_is_inclusive(self):
        tau = float(self.scores.entropies[0])
        self.assertIs(self.scores.route(tau).decisions[0], Domain.SEEN)
        self.assertIs(self.scores.route(np.nextafter(tau, -np.inf)).decisions[0], Domain.UNSEEN)

    def test_routing_monotone_in_tau(self):
        counts = [self.scores.route(tau).routed_seen for tau in np.linspace(0.0, math.log(3), 25)]
        self.assertEqual(counts, sorted(counts))

    def test_single_prediction_agrees_with_batch(self):
        x = self.dataset.test_seen[0].feature
        tau = float(np.median(self.scores.entropies))
        prediction = gated_predict(x, self.models.amse, self.models.s2v, self.attributes, self.dataset.sorted_unseen,
                                   GateConfig(tau=tau))
        routed = self.scores.route(tau)
        self.assertEqual(prediction.class_id, int(routed.class_ids[0]))
        self.assertIs(prediction.domain_decision, routed.decisions[0])
        self.assertAlmostEqual(prediction.entropy, self.scores.entropies[0], places=12)
        assert_allclose(prediction.scores, seen_probabilities(x, self.models.amse))

    def test_unseen_route_only_returns_unseen_classes(self):
        self.assertTrue(set(self.scores.unseen_predictions.tolist()) <= self.dataset.unseen_classes)


class EvaluationTests(GateFixtureMixin, unittest.TestCase):
    def test_sweep_duplicate_tau_identical(self):
        rows = tau_sweep(self.dataset, self.models, [0.2, 0.5, 0.5, 1.0])
        self.assertEqual([tau for tau, _ in rows], [0.2, 0.5, 0.5, 1.0])
        self.assertEqual(rows[1][1], rows[2][1])

    def test_sweep_matches_single_evaluation(self):
        (_, swept), = tau_sweep(self.dataset, self.models, [0.4])
        self.assertEqual(swept, evaluate(self.dataset, self.models, GateConfig(tau=0.4)))

    def test_sweep_rejects_unsorted_grid(self):
        with self.assertRaises(ValidationError):
            tau_sweep(self.dataset, self.models, [1.0, 0.5])
        with self.assertRaises(ValidationError):
            tau_sweep(self.dataset, self.models, [])

    def test_generalized_unseen_recall_counts_unseen_predictions(self):
        report = evaluate_generalized(self.dataset, self.models.s2v)
        unseen = self.dataset.stack("test_unseen")
        predictions = np.atleast_1d(predict_generalized(unseen.features, self.models.s2v, self.attributes))
        expected = 100.0 * np.mean([int(p) in self.dataset.unseen_classes for p in predictions])
        self.assertAlmostEqual(report.r_u, expected, places=9)

    def test_split_entropies_bounded(self):
        values = split_entropies(self.dataset, self.models.amse, "test_unseen")
        self.assertEqual(len(values), len(self.dataset.test_unseen))
        self.assertTrue(np.all((values >= 0) & (values <= math.log(3) + 1e-12)))


    def test_classifier_accuracy_over_classes_present(self):
        dropped = self.dataset.sorted_seen[-1]
        kept = [s for s in self.dataset.val_seen if s.label != dropped]
        dataset = attrs.evolve(self.dataset, val_seen=kept)
        probs = seen_probabilities(np.stack([s.feature for s in kept]), self.models.amse)
        predictions = np.asarray(self.models.amse.seen_classes)[np.argmax(probs, axis=1)]
        labels = np.array([s.label for s in kept])
        expected = mca(predictions, labels, set(self.dataset.seen_classes) - {dropped})
        self.assertAlmostEqual(classifier_accuracy(dataset, self.models.amse, "val_seen"), expected, places=12)


class HistogramTests(GateFixtureMixin, unittest.TestCase):
    def test_counts_cover_both_domains(self):
        frame = entropy_statistics(self.dataset, self.models, bins=10)
        self.assertEqual(tuple(frame.columns), HISTOGRAM_COLUMNS)
        self.assertEqual(len(frame), 10)
        self.assertEqual(frame["seen"].sum(), len(self.dataset.test_seen))
        self.assertEqual(frame["unseen"].sum(), len(self.dataset.test_unseen))
        self.assertAlmostEqual(frame["bin_right"].iloc[-1], math.log(3))

    def test_csv_round_trip(self):
        frame = entropy_statistics(self.dataset, self.models, bins=4)
        with tempfile.TemporaryDirectory() as tmp:
            loaded = read_entropy_histogram(write_entropy_histogram(frame, Path(tmp) / "hist.csv"))
        assert_array_equal(loaded["seen"], frame["seen"])
        assert_allclose(loaded["bin_left"], frame["bin_left"], atol=1e-6)

    def test_invalid_bins(self):
        with self.assertRaises(ValidationError):
            entropy_statistics(self.dataset, self.models, bins=0)
