import tempfile
import unittest
from pathlib import Path

from dvbe_lab.exceptions import ValidationError

from .models import MetricsReport
from .serializers import read_reports, write_reports
from .services import domain_recall, harmonic, mca

# (MCA_u, MCA_s, H) of the published fixed- and finetuned-backbone rows on CUB, AWA2, aPY, SUN
PUBLISHED_ROWS = [
    (53.2, 60.2, 56.5), (63.6, 70.8, 67.0), (32.6, 58.3, 41.8), (45.0, 37.2, 40.7),
    (64.4, 73.2, 68.5), (62.7, 77.5, 69.4), (37.9, 55.9, 45.2), (44.1, 41.6, 42.8),
]


class MeanClassAccuracyTests(unittest.TestCase):
    def test_all_correct(self):
        self.assertEqual(mca([0, 1, 1], [0, 1, 1], {0, 1}), 100.0)

    def test_class_balanced(self):
        labels = [0] * 9 + [1]
        predictions = [0] * 9 + [0]
        self.assertEqual(mca(predictions, labels, {0, 1}), 50.0)

    def test_three_class_mean(self):
        labels = [0, 1, 1, 2]
        predictions = [0, 1, 2, 0]
        self.assertAlmostEqual(mca(predictions, labels, {0, 1, 2}), 50.0)

    def test_duplication_invariance(self):
        labels, predictions = [0, 0, 1, 2, 2, 2], [0, 1, 1, 2, 0, 2]
        self.assertAlmostEqual(mca(predictions * 3, labels * 3, {0, 1, 2}), mca(predictions, labels, {0, 1, 2}))

    def test_empty_class_is_named(self):
        with self.assertRaises(ValidationError) as ctx:
            mca([0], [0], {0, 4})
        self.assertIn("4", str(ctx.exception))


class HarmonicTests(unittest.TestCase):
    def test_published_rows(self):
        for mca_u, mca_s, h in PUBLISHED_ROWS:
            self.assertLess(abs(harmonic(mca_u, mca_s) - h), 0.1, (mca_u, mca_s))

    def test_equal_arguments(self):
        self.assertAlmostEqual(harmonic(42.0, 42.0), 42.0)

    def test_zero(self):
        self.assertEqual(harmonic(0.0, 80.0), 0.0)
        self.assertEqual(harmonic(0.0, 0.0), 0.0)

    def test_symmetric_and_bounded(self):
        for a, b in ((10.0, 90.0), (33.3, 66.6), (1.0, 2.0)):
            self.assertAlmostEqual(harmonic(a, b), harmonic(b, a))
            self.assertLessEqual(harmonic(a, b), (a + b) / 2.0)


class DomainRecallTests(unittest.TestCase):
    def test_perfect_gate(self):
        self.assertEqual(domain_recall(["seen", "unseen"], ["seen", "unseen"]), (100.0, 100.0))

    def test_always_seen(self):
        self.assertEqual(domain_recall(["seen"] * 3, ["seen", "unseen", "unseen"]), (100.0, 0.0))

    def test_counting(self):
        decisions = ["seen"] * 8 + ["unseen"] * 2 + ["unseen"] * 3 + ["seen"]
        truth = ["seen"] * 10 + ["unseen"] * 4
        self.assertEqual(domain_recall(decisions, truth), (80.0, 75.0))

    def test_missing_domain(self):
        with self.assertRaises(ValidationError):
            domain_recall(["seen"], ["seen"])


class ReportTests(unittest.TestCase):
    def test_build_derives_harmonic_means(self):
        report = MetricsReport.build(mca_s=73.2, mca_u=64.4, r_s=80.0, r_u=0.0)
        self.assertAlmostEqual(report.h, 68.5, delta=0.05)
        self.assertEqual(report.h_r, 0.0)

    def test_csv_round_trip(self):
        rows = [(0.5, MetricsReport.build(60.0, 40.0, 90.0, 50.0)), (None, MetricsReport.build(70.0, 0.0, 100.0, 0.0))]
        with tempfile.TemporaryDirectory() as tmp:
            path = write_reports(rows, Path(tmp) / "sweep.csv")
            header = path.read_text(encoding="utf-8").splitlines()[0]
            self.assertEqual(header, "tau,mca_s,mca_u,h,r_s,r_u,h_r")
            loaded = read_reports(path)
        self.assertEqual(loaded[0][0], 0.5)
        self.assertIsNone(loaded[1][0])
        self.assertAlmostEqual(loaded[0][1].h, 48.0, places=5)


if __name__ == "__main__":
    unittest.main()
