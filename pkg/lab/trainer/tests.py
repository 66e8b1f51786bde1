import tempfile
import unittest
from pathlib import Path
from unittest import mock

import attrs
import numpy as np
from numpy.testing import assert_array_equal

from autos2v.models import ArchParams, CellSpec, SemanticHead
from autos2v.serializers import save_cell
from dataio.models import SynthConfig
from dataio.synth import synth_gzsl
from dvbe_lab.conf import settings
from dvbe_lab.exceptions import ContractError, NumericError, ValidationError
from gate.services import split_entropies, tau_sweep
from metrics.models import MetricsReport
from numerics import Tensor, check_parameters, make_rng

from . import ablation
from .ablation import COMPONENTS, HEADS, INTERACTION, MARGINS, AblationRow, run_ablation, table
from .models import EpochRecord, TrainConfig, TrainLog
from .objective import overall_loss
from .optim import SGD
from .serializers import (
    load_checkpoint,
    model_entries,
    read_ablation,
    read_entries,
    read_trainlog,
    save_checkpoint,
    write_ablation,
    write_entries,
    write_trainlog,
)
from .tasks import _run_pass, fix_architecture, init_models, run_pipeline, train_stage1, train_stage2


TINY = TrainConfig(lr=0.05, momentum=0.9, epochs_stage1=2, epochs_stage2=2, batch_size=6, seed=7)


def tiny_dataset(seed=3, val_fraction=0.2):
    return synth_gzsl(SynthConfig(
        n_seen=3, n_unseen=2, attr_dim=5, feat_dims=(2, 2, 6), samples_per_class=10,
        seed=seed, val_fraction=val_fraction,
    ))


def tiny_models(dataset, seed=0, **kwargs):
    return init_models(dataset, seed, reduced_dim=3, embed_dim=4, n_nodes=2, top_k=2, **kwargs)


def assert_snapshots_equal(test, a, b):
    test.assertEqual(sorted(a), sorted(b))
    for name in a:
        assert_array_equal(a[name], b[name], err_msg=name)


class OverallLossTests(unittest.TestCase):
    def setUp(self):
        self.dataset = tiny_dataset()
        self.batch = next(self.dataset.batches("train_seen", 4))
        self.attributes = self.dataset.attribute_matrix()

    def loss(self, models, config):
        return overall_loss(
            self.batch.features, self.batch.labels, models, self.attributes, self.dataset.sorted_seen, config
        )

    def test_gamma_zero_drops_cet(self):
        losses = self.loss(tiny_models(self.dataset), TrainConfig(gamma=0.0))
        self.assertAlmostEqual(losses.l_all, losses.l_s2v + losses.l_ams, places=12)
        self.assertGreater(losses.l_cet, 0.0)

    def test_components_sum(self):
        losses = self.loss(tiny_models(self.dataset), TrainConfig(gamma=0.5))
        self.assertAlmostEqual(losses.l_all, losses.l_s2v + losses.l_ams + 0.5 * losses.l_cet, places=12)

    def test_gradient_matches_finite_differences(self):
        config = TrainConfig(gamma=0.7, margin_mode="fixed")
        for seed in range(3):
            models = tiny_models(self.dataset, seed=seed, use_normalization=False)
            params = {**models.weight_parameters(), **models.arch_parameters()}
            report = check_parameters(lambda: self.loss(models, config).total, params, step=1e-5)
            self.assertTrue(report.passed(1e-4), f"seed {seed}: {report.worst()} error {report.max_error:.2e}")

    def test_degenerate_visual_embedding_names_component(self):
        models = tiny_models(self.dataset)
        models.s2v.fv_weight.data = np.zeros_like(models.s2v.fv_weight.data)
        with self.assertRaises(NumericError) as cm:
            self.loss(models, TINY)
        self.assertEqual(cm.exception.component, "l_s2v")


class SgdTests(unittest.TestCase):
    def test_momentum_update(self):
        p = Tensor([1.0], requires_grad=True)
        optimizer = SGD({"p": p}, lr=0.1, momentum=0.5)
        for expected in (0.8, 0.5):
            p.grad = np.array([2.0])
            optimizer.step()
            self.assertAlmostEqual(p.data[0], expected, places=12)

    def test_zero_lr_is_identity(self):
        p = Tensor([0.3, -1.7], requires_grad=True)
        before = p.data.copy()
        optimizer = SGD({"p": p}, lr=0.0, momentum=0.9)
        p.grad = np.array([5.0, -2.0])
        optimizer.step()
        assert_array_equal(p.data, before)

    def test_missing_gradient_skipped(self):
        p = Tensor([1.0], requires_grad=True)
        SGD({"p": p}, lr=0.1).step()
        assert_array_equal(p.data, [1.0])

    def test_invalid_settings(self):
        with self.assertRaises(ValidationError):
            SGD({}, lr=-0.1)
        with self.assertRaises(ValidationError):
            SGD({}, lr=0.1, momentum=1.0)


class StageOneTests(unittest.TestCase):
    def setUp(self):
        self.dataset = tiny_dataset()

    def test_zero_epochs_leave_models_unchanged(self):
        models = tiny_models(self.dataset)
        before = models.snapshot()
        log = train_stage1(self.dataset, models, TrainConfig(epochs_stage1=0))
        self.assertEqual(len(log), 0)
        assert_snapshots_equal(self, before, models.snapshot())

    def test_zero_lr_leaves_models_bit_identical(self):
        models = tiny_models(self.dataset)
        before = models.snapshot()
        log = train_stage1(self.dataset, models, TrainConfig(lr=0.0, epochs_stage1=1, batch_size=6))
        self.assertEqual(len(log), 1)
        assert_snapshots_equal(self, before, models.snapshot())

    def test_one_record_per_epoch(self):
        log = train_stage1(self.dataset, tiny_models(self.dataset), TINY)
        self.assertEqual(log.column("epoch"), [1, 2])
        for record in log.records:
            self.assertTrue(0.0 <= record.val_acc <= 100.0)
            self.assertTrue(0.0 <= record.val_entropy <= np.log(3) + 1e-12)

    def test_same_seed_same_parameters(self):
        runs = []
        for _ in range(2):
            models = tiny_models(self.dataset)
            log = train_stage1(self.dataset, models, TINY)
            runs.append((models.snapshot(), log))
        assert_snapshots_equal(self, runs[0][0], runs[1][0])
        self.assertEqual(runs[0][1], runs[1][1])

    def test_architecture_pass_moves_only_alpha(self):
        models = tiny_models(self.dataset)
        weights = SGD(models.weight_parameters(), TINY.lr, TINY.momentum)
        arch = SGD(models.arch_parameters(), TINY.lr, TINY.momentum)
        before = models.snapshot()
        _run_pass(self.dataset, "val_seen", models, arch, TINY, make_rng(0))
        after = models.snapshot()
        for name in weights.params:
            assert_array_equal(before[name], after[name], err_msg=name)
        self.assertTrue(any(not np.array_equal(before[name], after[name]) for name in arch.params))

    def test_weight_pass_leaves_alpha(self):
        models = tiny_models(self.dataset)
        weights = SGD(models.weight_parameters(), TINY.lr, TINY.momentum)
        arch = SGD(models.arch_parameters(), TINY.lr, TINY.momentum)
        before = models.snapshot()
        _run_pass(self.dataset, "train_seen", models, weights, TINY, make_rng(0))
        after = models.snapshot()
        for name in arch.params:
            assert_array_equal(before[name], after[name], err_msg=name)
        self.assertTrue(any(not np.array_equal(before[name], after[name]) for name in weights.params))

    def test_empty_validation_split(self):
        dataset = tiny_dataset(val_fraction=0.0)
        with self.assertRaises(ContractError):
            train_stage1(dataset, tiny_models(dataset), TINY)

    def test_validation_split_missing_a_seen_class(self):
        dropped = self.dataset.sorted_seen[0]
        dataset = attrs.evolve(self.dataset, val_seen=[s for s in self.dataset.val_seen if s.label != dropped])
        log = train_stage1(dataset, tiny_models(dataset), TINY)
        self.assertEqual(len(log), 2)
        for record in log.records:
            self.assertTrue(0.0 <= record.val_acc <= 100.0)


class StageTwoTests(unittest.TestCase):
    def setUp(self):
        self.dataset = tiny_dataset()

    def test_continuous_architecture_rejected(self):
        with self.assertRaises(ContractError):
            train_stage2(self.dataset, tiny_models(self.dataset), TINY)

    def test_fixed_cell_untouched(self):
        models, cell = fix_architecture(tiny_models(self.dataset))
        before = models.snapshot()
        log = train_stage2(self.dataset, models, TINY)
        self.assertEqual(len(log), TINY.epochs_stage2)
        self.assertIs(models.s2v.arch, cell)
        self.assertFalse(models.arch_parameters())
        self.assertTrue(any(not np.array_equal(before[n], models.snapshot()[n]) for n in before))

    def test_zero_epochs(self):
        models, _ = fix_architecture(tiny_models(self.dataset))
        before = models.snapshot()
        self.assertEqual(len(train_stage2(self.dataset, models, TINY, epochs=0)), 0)
        assert_snapshots_equal(self, before, models.snapshot())


class PipelineTests(unittest.TestCase):
    def setUp(self):
        self.dataset = tiny_dataset()

    def test_searched_pipeline(self):
        models, cell, search_log, train_log = run_pipeline(self.dataset, tiny_models(self.dataset), TINY)
        self.assertIsInstance(cell, CellSpec)
        self.assertIs(models.s2v.arch, cell)
        self.assertEqual(len(search_log), TINY.epochs_stage1)
        self.assertEqual(len(train_log), TINY.epochs_stage2)

    def test_repeated_runs_write_identical_files(self):
        with tempfile.TemporaryDirectory() as tmp:
            outputs = []
            for name in ("a", "b"):
                models, cell, search_log, train_log = run_pipeline(self.dataset, tiny_models(self.dataset), TINY)
                directory = Path(tmp) / name
                paths = [
                    save_checkpoint(models, directory / "model.ckpt"),
                    save_cell(cell, directory / "cell.txt"),
                    write_trainlog(search_log, directory / "search_log.csv"),
                    write_trainlog(train_log, directory / "train_log.csv"),
                ]
                outputs.append([path.read_bytes() for path in paths])
        self.assertEqual(outputs[0], outputs[1])

    def test_hand_designed_pipeline_trains_both_budgets(self):
        models = tiny_models(self.dataset, head=SemanticHead.HAND_DESIGNED)
        models, cell, search_log, train_log = run_pipeline(self.dataset, models, TINY)
        self.assertIsNone(cell)
        self.assertIsNone(search_log)
        self.assertEqual(len(train_log), TINY.epochs_stage1 + TINY.epochs_stage2)

    def test_hand_designed_without_validation_split(self):
        dataset = tiny_dataset(val_fraction=0.0)
        models = tiny_models(dataset, head=SemanticHead.HAND_DESIGNED)
        _, _, _, log = run_pipeline(dataset, models, TINY)
        self.assertEqual(len(log), TINY.epochs_stage1 + TINY.epochs_stage2)


class CheckpointTests(unittest.TestCase):
    def setUp(self):
        self.dataset = tiny_dataset()
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def round_trip(self, models):
        loaded = load_checkpoint(save_checkpoint(models, self.dir / "model.ckpt"))
        assert_snapshots_equal(self, models.snapshot(), loaded.snapshot())
        assert_array_equal(models.s2v.adjacency, loaded.s2v.adjacency)
        self.assertEqual(loaded.amse.seen_classes, models.amse.seen_classes)
        self.assertEqual(loaded.s2v.class_ids, models.s2v.class_ids)
        self.assertEqual(loaded.amse.variant, models.amse.variant)
        self.assertEqual(loaded.amse.use_normalization, models.amse.use_normalization)
        return loaded

    def test_searching_model(self):
        loaded = self.round_trip(tiny_models(self.dataset))
        self.assertIsInstance(loaded.s2v.arch, ArchParams)

    def test_discretized_model(self):
        models, cell = fix_architecture(tiny_models(self.dataset))
        self.assertEqual(self.round_trip(models).s2v.arch, cell)

    def test_hand_designed_model(self):
        loaded = self.round_trip(tiny_models(self.dataset, head="hand_designed", variant="first_order"))
        self.assertTrue(loaded.s2v.hand_designed)

    def test_entries_sorted_and_byte_identical(self):
        a = save_checkpoint(tiny_models(self.dataset), self.dir / "a.ckpt")
        b = save_checkpoint(tiny_models(self.dataset), self.dir / "b.ckpt")
        self.assertEqual(a.read_bytes(), b.read_bytes())
        names = list(read_entries(a))
        self.assertEqual(names, sorted(names))
        self.assertIn("meta.variant", names)

    def test_scalar_metadata(self):
        models = tiny_models(self.dataset)
        loaded = self.round_trip(models)
        self.assertEqual(loaded.amse.signed_sqrt_eps, models.amse.signed_sqrt_eps)
        self.assertEqual(loaded.s2v.n_nodes, models.s2v.n_nodes)

    def test_metadata_entry_with_several_values(self):
        entries = model_entries(tiny_models(self.dataset))
        entries["meta.n_nodes"] = np.array([2.0, 2.0])
        path = write_entries(entries, self.dir / "model.ckpt")
        with self.assertRaisesRegex(ValidationError, "meta.n_nodes"):
            load_checkpoint(path)

    def test_truncated_file(self):
        path = save_checkpoint(tiny_models(self.dataset), self.dir / "model.ckpt")
        path.write_bytes(path.read_bytes()[:-3])
        with self.assertRaises(ValidationError):
            load_checkpoint(path)


class CsvTests(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_trainlog_round_trip(self):
        log = TrainLog(stage="train")
        log.append(EpochRecord(1, 0.25, 1.1, 2.3, 3.0 + 1 / 3, 62.5, 0.7))
        log.append(EpochRecord(2, 0.2, 0.9, 2.1, 2.9, 75.0, 0.55))
        path = write_trainlog(log, self.dir / "trainlog.csv")
        self.assertEqual(path.read_text().splitlines()[0], "epoch,l_s2v,l_ams,l_cet,l_all,val_acc,val_entropy")
        self.assertEqual(read_trainlog(path, stage="train"), log)

    def test_non_finite_record(self):
        with self.assertRaises(NumericError):
            EpochRecord(1, float("nan"), 1.0, 1.0, 1.0, 50.0, 0.5)

    def test_ablation_round_trip(self):
        rows = [
            AblationRow(COMPONENTS, "BaseS2V", MetricsReport.build(50.0, 25.0, 80.0, 40.0), None, 1.5),
            AblationRow(COMPONENTS, "+f_d", MetricsReport.build(60.0, 30.0, 90.0, 60.0), 0.75, 1.25),
        ]
        loaded = read_ablation(write_ablation(rows, self.dir / "ablation.csv"))
        self.assertEqual([(r.table, r.name, r.tau) for r in loaded], [(r.table, r.name, r.tau) for r in rows])
        for row, back in zip(rows, loaded):
            self.assertAlmostEqual(back.report.h, row.report.h, places=5)


class AblationTests(unittest.TestCase):
    def test_tables_and_shared_configurations(self):
        dataset = tiny_dataset()
        config = TrainConfig(lr=0.05, epochs_stage1=1, epochs_stage2=1, batch_size=6, seed=2)
        with mock.patch.object(ablation, "_train", wraps=ablation._train) as train:
            rows = run_ablation(dataset, config)
        self.assertEqual(train.call_count, 7)
        self.assertEqual(list(table(rows, COMPONENTS)), ["BaseS2V", "+f_d", "+CSE", "+L_ams"])
        self.assertEqual(list(table(rows, MARGINS)), ["standard", "fixed", "adaptive"])
        self.assertEqual(list(table(rows, INTERACTION)), ["first_order", "bilinear", "attentive", "cross_attentive"])
        self.assertEqual(list(table(rows, HEADS)), ["hand_designed", "searched"])
        self.assertIsNone(rows[0].tau)
        self.assertTrue(all(row.tau is not None for row in rows[1:]))
        self.assertEqual(table(rows, MARGINS)["standard"], table(rows, COMPONENTS)["+CSE"])


class AcceptanceTests(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.dataset = synth_gzsl(SynthConfig(seed=1))
        cls.config = TrainConfig(**settings.TRAIN, seed=1)

    def test_component_ordering(self):
        rows = run_ablation(self.dataset, self.config)
        h = {name: report.h for name, report in table(rows, COMPONENTS).items()}
        self.assertLess(h["BaseS2V"], h["+f_d"])
        self.assertLess(h["+f_d"], h["+CSE"])
        self.assertLessEqual(h["+CSE"], h["+L_ams"])
        self.assertGreaterEqual(h["+L_ams"] - h["BaseS2V"], 5.0)
        losses = {row.name: row.final_loss for row in rows if row.table == MARGINS}
        self.assertLessEqual(losses["adaptive"], losses["fixed"])

    def test_entropy_separation_and_interior_optimum(self):
        models, _, search_log, _ = run_pipeline(self.dataset, init_models(self.dataset, 1), self.config)
        losses = search_log.column("l_all")[:5]
        self.assertTrue(all(b < a for a, b in zip(losses, losses[1:])), losses)

        seen = split_entropies(self.dataset, models.amse, "test_seen")
        unseen = split_entropies(self.dataset, models.amse, "test_unseen")
        self.assertGreater(unseen.mean() - seen.mean(), 0.2)

        grid = np.linspace(0.0, np.log(len(self.dataset.seen_classes)), 21)
        h = [report.h for _, report in tau_sweep(self.dataset, models, grid)]
        best = int(np.argmax(h))
        self.assertTrue(0 < best < len(grid) - 1, h)
