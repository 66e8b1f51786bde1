import filecmp
import tempfile
import unittest
from itertools import combinations
from pathlib import Path

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal
from scipy.stats import spearmanr
from sklearn.linear_model import LogisticRegression

from dvbe_lab.exceptions import ValidationError

from .models import Domain, SynthConfig, held_out_count
from .serializers import load_dataset, write_dataset
from .synth import class_means, synth_gzsl

TOY_FEATURES = """1 1 2 6
0 0
1.0 0.5
0 0
0.9 0.4
1 0
0.1 1.0
1 0
0.2 0.8
1 2
0.15 0.9
7 1
0.5 0.5
"""

TOY_ATTRIBUTES = """3 3
0 1.0 0.0 0.5
1 0.0 1.0 0.5
7 0.5 0.5 1.0
"""

TOY_SPLITS = """seen: 0 1
unseen: 7
val_fraction: 0.5
"""


class ToyFilesMixin:
    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.root = Path(self._tmp.name)

    def tearDown(self):
        self._tmp.cleanup()

    def write(self, features=TOY_FEATURES, attributes=TOY_ATTRIBUTES, splits=TOY_SPLITS):
        paths = self.root / "features.txt", self.root / "attributes.txt", self.root / "splits.txt"
        for path, text in zip(paths, (features, attributes, splits)):
            path.write_text(text, encoding="utf-8")
        return paths


class LoadDatasetTests(ToyFilesMixin, unittest.TestCase):
    def test_well_formed_toy_files(self):
        dataset = load_dataset(*self.write())
        self.assertEqual(dataset.seen_classes, {0, 1})
        self.assertEqual(dataset.unseen_classes, {7})
        self.assertEqual([s.label for s in dataset.train_seen], [0, 1])
        self.assertEqual([s.label for s in dataset.val_seen], [0, 1])
        self.assertEqual([s.label for s in dataset.test_seen], [1])
        self.assertEqual(dataset.test_unseen[0].domain, Domain.UNSEEN)
        self.assertEqual(dataset.feature_dims, (1, 1, 2))

    def test_class_in_both_sets(self):
        splits = "seen: 0 1 7\nunseen: 7\nval_fraction: 0.5\n"
        with self.assertRaises(ValidationError):
            load_dataset(*self.write(splits=splits))

    def test_attribute_length_mismatch(self):
        attributes = "3 5\n0 1 0 0 0 1\n1 0 1 0 0\n7 1 1 1 1 1\n"
        with self.assertRaisesRegex(ValidationError, "class 1 has 4 attributes, expected 5"):
            load_dataset(*self.write(attributes=attributes))

    def test_missing_class_attribute(self):
        attributes = "2 3\n0 1.0 0.0 0.5\n1 0.0 1.0 0.5\n"
        with self.assertRaises(ValidationError):
            load_dataset(*self.write(attributes=attributes))

    def test_all_zero_attribute(self):
        attributes = TOY_ATTRIBUTES.replace("7 0.5 0.5 1.0", "7 0 0 0")
        with self.assertRaises(ValidationError):
            load_dataset(*self.write(attributes=attributes))

    def test_domain_flag_contradicting_splits(self):
        features = TOY_FEATURES.replace("7 1\n", "7 0\n")
        with self.assertRaises(ValidationError):
            load_dataset(*self.write(features=features))

    def test_missing_file(self):
        with self.assertRaises(ValidationError):
            load_dataset(self.root / "nope.txt", self.root / "a.txt", self.root / "s.txt")


class RoundTripTests(ToyFilesMixin, unittest.TestCase):
    def test_write_of_load_is_byte_identical(self):
        dataset = synth_gzsl(SynthConfig(n_seen=3, n_unseen=2, attr_dim=4, feat_dims=(2, 2, 3), samples_per_class=6, seed=5))
        first = [self.root / name for name in ("f1.txt", "a1.txt", "s1.txt")]
        second = [self.root / name for name in ("f2.txt", "a2.txt", "s2.txt")]
        write_dataset(dataset, *first)
        reloaded = load_dataset(*first)
        write_dataset(reloaded, *second)
        for a, b in zip(first, second):
            self.assertTrue(filecmp.cmp(a, b, shallow=False), f"{a.name} differs after round trip")
        self.assertEqual(reloaded, dataset)


class SynthTests(unittest.TestCase):
    def test_same_seed_identical(self):
        config = SynthConfig(samples_per_class=5)
        self.assertEqual(synth_gzsl(config), synth_gzsl(config))

    def test_vanishing_noise_gives_identical_samples(self):
        dataset = synth_gzsl(SynthConfig(samples_per_class=5, noise_scale=1e-12))
        by_class = {}
        for sample in dataset.train_seen + dataset.test_unseen:
            by_class.setdefault(sample.label, []).append(sample.feature)
        for features in by_class.values():
            for feature in features[1:]:
                assert_allclose(feature, features[0], atol=1e-9)

    def test_split_sizes_and_domains(self):
        config = SynthConfig()
        dataset = synth_gzsl(config)
        n_test = held_out_count(50, 0.2)
        n_val = held_out_count(50 - n_test, 0.2)
        self.assertEqual(len(dataset.test_seen), 8 * n_test)
        self.assertEqual(len(dataset.val_seen), 8 * n_val)
        self.assertEqual(len(dataset.test_unseen), 4 * 50)
        self.assertTrue(all(s.domain is Domain.UNSEEN for s in dataset.test_unseen))
        self.assertFalse(dataset.seen_classes & dataset.unseen_classes)

    def test_mean_geometry_follows_attributes(self):
        config = SynthConfig()
        dataset = synth_gzsl(config)
        means = class_means(config)
        attrs = dataset.attribute_matrix()

        def cosine(u, v):
            return u @ v / (np.linalg.norm(u) * np.linalg.norm(v))

        pairs = list(combinations(range(len(means)), 2))
        rho = spearmanr(
            [cosine(means[i], means[j]) for i, j in pairs],
            [cosine(attrs[i], attrs[j]) for i, j in pairs],
        ).correlation
        self.assertGreater(rho, 0.8)

    def test_linear_classifier_separates_seen_classes(self):
        dataset = synth_gzsl(SynthConfig())
        train = dataset.stack("train_seen")
        test = dataset.stack("test_seen")
        classifier = LogisticRegression(max_iter=2000)
        classifier.fit(train.features.mean(axis=(1, 2)), train.labels)
        accuracy = classifier.score(test.features.mean(axis=(1, 2)), test.labels)
        self.assertGreaterEqual(accuracy, 0.95)

    def test_invalid_config(self):
        with self.assertRaises(ValueError):
            SynthConfig(noise_scale=0.0)
        with self.assertRaises(ValueError):
            SynthConfig(feat_dims=(4, 4))


class BatchTests(unittest.TestCase):
    def test_batches_cover_split_once(self):
        dataset = synth_gzsl(SynthConfig(samples_per_class=5))
        rng = np.random.default_rng(0)
        labels = np.concatenate([b.labels for b in dataset.batches("train_seen", 4, rng)])
        assert_array_equal(np.sort(labels), np.sort(dataset.stack("train_seen").labels))

    def test_unknown_split(self):
        dataset = synth_gzsl(SynthConfig(samples_per_class=5))
        with self.assertRaises(ValidationError):
            dataset.split("train")


if __name__ == "__main__":
    unittest.main()
