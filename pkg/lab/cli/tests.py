import filecmp
import tempfile
import unittest
from pathlib import Path

import pandas as pd
from click.testing import CliRunner

from autos2v.serializers import load_cell
from dataio.serializers import load_dataset_dir
from dvbe_lab.conf import settings
from dvbe_lab.exceptions import ValidationError
from metrics.serializers import read_reports
from trainer.ablation import ABLATION_PLAN
from trainer.serializers import load_checkpoint, read_ablation, read_trainlog

from .commands import cli, main
from .config import build_run_config

SMALL_DATA = [
    "--n-seen", "3", "--n-unseen", "2", "--attr-dim", "5", "--feat-dims", "2,2,6", "--samples-per-class", "10",
]
SMALL_MODEL = ["--reduced-dim", "3", "--embed-dim", "4", "--n-nodes", "2", "--top-k", "2", "--batch-size", "6"]


class TempDirMixin:
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()


class RunConfigTests(TempDirMixin, unittest.TestCase):
    def write_config(self, text):
        path = self.dir / "run.conf"
        path.write_text(text)
        return str(path)

    def test_flag_over_file_over_settings(self):
        path = self.write_config("# defaults\nlr = 0.1\ngamma = 0.3\n")
        config = build_run_config("train", {"lr": 0.5, "gamma": None}, path)
        self.assertEqual(config.train.lr, 0.5)
        self.assertEqual(config.train.gamma, 0.3)
        self.assertEqual(config.train.momentum, settings.TRAIN["momentum"])

    def test_seed_defaults_to_settings(self):
        config = build_run_config("synth", {})
        self.assertEqual(config.seed, settings.SEED)
        self.assertEqual(config.synth.seed, config.train.seed)

    def test_file_values_cast(self):
        path = self.write_config("feat_dims = 3,3,8\nmargin_mode = fixed\nuse_normalization = false\n")
        config = build_run_config("synth", {}, path)
        self.assertEqual(config.synth.feat_dims, (3, 3, 8))
        self.assertEqual(config.train.margin_mode.value, "fixed")
        self.assertIs(config.model["use_normalization"], False)

    def test_tau_only_when_given(self):
        self.assertIsNone(build_run_config("eval", {}).tau)
        self.assertEqual(build_run_config("eval", {"tau": 0.7}).gate.tau, 0.7)

    def test_invalid_values(self):
        with self.assertRaises(ValidationError):
            build_run_config("train", {"lr": -1.0})
        with self.assertRaises(ValidationError):
            build_run_config("train", {}, self.write_config("batch_size = many\n"))
        with self.assertRaises(ValidationError):
            build_run_config("train", {}, str(self.dir / "missing.conf"))


class SynthCommandTests(TempDirMixin, unittest.TestCase):
    def test_same_seed_identical_files(self):
        runner = CliRunner()
        for name in ("a", "b"):
            result = runner.invoke(cli, ["synth", "--out", str(self.dir / name), "--seed", "3"] + SMALL_DATA)
            self.assertEqual(result.exit_code, 0, result.output)
        for filename in settings.DATASET_FILES.values():
            self.assertTrue(filecmp.cmp(self.dir / "a" / filename, self.dir / "b" / filename, shallow=False))

    def test_config_file_and_flags(self):
        config = self.dir / "synth.conf"
        config.write_text("n_seen = 3\nn_unseen = 2\nsamples_per_class = 6\nfeat_dims = 2,2,4\n")
        code = main(["synth", "--out", str(self.dir / "d"), "--config", str(config), "--n-seen", "4"])
        self.assertEqual(code, 0)
        dataset = load_dataset_dir(self.dir / "d", settings.DATASET_FILES)
        self.assertEqual(len(dataset.seen_classes), 4)
        self.assertEqual(dataset.feature_dims, (2, 2, 4))

    def test_exit_codes(self):
        self.assertEqual(main(["synth", "--out", str(self.dir / "d"), "--noise-scale", "0"]), 2)
        self.assertEqual(main(["synth", "--out", str(self.dir / "d"), "--no-such-flag", "1"]), 1)
        self.assertEqual(main(["no-such-command"]), 1)


class PipelineCommandTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.tmp = tempfile.TemporaryDirectory()
        root = Path(cls.tmp.name)
        # output directories nest below paths that do not exist yet
        cls.data = root / "data"
        cls.search_dir, cls.train_dir = root / "runs" / "search", root / "runs" / "final" / "train"
        cls.root = root
        epochs = ["--epochs-stage1", "1", "--epochs-stage2", "1", "--seed", "2"]
        assert main(["synth", "--out", str(cls.data), "--seed", "2"] + SMALL_DATA) == 0
        assert main(["search", "--data", str(cls.data), "--out", str(cls.search_dir)] + SMALL_MODEL + epochs) == 0
        assert main([
            "train", "--data", str(cls.data), "--out", str(cls.train_dir),
            "--cell", str(cls.search_dir / "cell.txt"), "--checkpoint", str(cls.search_dir / "model.ckpt"),
        ] + SMALL_MODEL + epochs) == 0
        cls.checkpoint = str(cls.train_dir / "model.ckpt")

    @classmethod
    def tearDownClass(cls):
        cls.tmp.cleanup()

    def test_search_outputs(self):
        cell = load_cell(self.search_dir / "cell.txt")
        self.assertEqual(cell.n_nodes, 2)
        self.assertEqual(load_checkpoint(self.search_dir / "model.ckpt").s2v.arch, cell)
        self.assertEqual(len(read_trainlog(self.search_dir / "search_log.csv")), 1)

    def test_train_outputs(self):
        models = load_checkpoint(self.checkpoint)
        self.assertEqual(models.s2v.arch, load_cell(self.search_dir / "cell.txt"))
        self.assertEqual(len(read_trainlog(self.train_dir / "train_log.csv")), 1)

    def test_open_gate_matches_classifier_only(self):
        gated, ungated = self.root / "gated.csv", self.root / "ungated.csv"
        base = ["eval", "--data", str(self.data), "--checkpoint", self.checkpoint]
        self.assertEqual(main(base + ["--tau", "1e9", "--out", str(gated)]), 0)
        self.assertEqual(main(base + ["--classifier-only", "--out", str(ungated)]), 0)
        (tau, report), = read_reports(gated)
        self.assertEqual(tau, 1e9)
        self.assertAlmostEqual(report.mca_s, pd.read_csv(ungated)["mca_s"][0], places=6)

    def test_tau_sweep_and_histogram(self):
        sweep, hist = self.root / "sweep.csv", self.root / "hist.csv"
        code = main([
            "eval", "--data", str(self.data), "--checkpoint", self.checkpoint,
            "--tau-sweep", "0.1,0.5,1.0", "--out", str(sweep), "--entropy-hist", str(hist),
        ])
        self.assertEqual(code, 0)
        self.assertEqual([tau for tau, _ in read_reports(sweep)], [0.1, 0.5, 1.0])
        self.assertEqual(len(pd.read_csv(hist)), settings.ENTROPY_HISTOGRAM_BINS)

    def test_unsorted_sweep_rejected(self):
        code = main(["eval", "--data", str(self.data), "--checkpoint", self.checkpoint, "--tau-sweep", "1.0,0.5"])
        self.assertEqual(code, 2)

    def test_calibrate_prints_tau(self):
        result = CliRunner().invoke(cli, ["calibrate", "--data", str(self.data), "--checkpoint", self.checkpoint])
        self.assertEqual(result.exit_code, 0, result.output)
        self.assertGreaterEqual(float(result.output.strip().splitlines()[-1]), 0.0)

    def test_train_without_cell_rejected(self):
        code = main(["train", "--data", str(self.data), "--out", str(self.root / "x")] + SMALL_MODEL)
        self.assertEqual(code, 2)

    def test_ablation_creates_parent_directories(self):
        out = self.root / "reports" / "nested" / "ablation.csv"
        code = main([
            "ablation", "--data", str(self.data), "--out", str(out),
            "--epochs-stage1", "1", "--epochs-stage2", "1", "--batch-size", "6", "--seed", "2",
        ])
        self.assertEqual(code, 0)
        self.assertEqual(len(read_ablation(out)), len(ABLATION_PLAN))


class GradcheckCommandTests(unittest.TestCase):
    def test_single_seed_passes(self):
        result = CliRunner().invoke(cli, ["gradcheck", "--seeds", "0"])
        self.assertEqual(result.exit_code, 0, result.output)
        for component in ("embed", "ams_loss", "embed_semantic", "s2v_loss", "cet_loss", "overall_loss"):
            self.assertIn(component, result.output)

    def test_impossible_tolerance_is_numeric_failure(self):
        self.assertEqual(main(["gradcheck", "--seeds", "0", "--tolerance", "0"]), 3)
