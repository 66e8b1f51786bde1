import math
import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from dvbe_lab.exceptions import ContractError, NumericError, ValidationError
from numerics import Tensor, check_parameters, make_rng, no_grad

from .embedding import embed_semantic, embed_visual, global_average_pool
from .inference import predict_generalized, predict_unseen
from .losses import cet_loss, cosine_distance, s2v_loss
from .models import ArchParams, CellSpec, OperationKind, S2vModel, SemanticHead, dag_edges
from .operations import apply_operation, build_adjacency, graph_conv, mixed_op
from .search import cell_summary, discretize
from .serializers import dumps_cell, load_cell, loads_cell, save_cell

FC = OperationKind.FULLY_CONNECTED
GC = OperationKind.GRAPH_CONVOLUTION
SKIP = OperationKind.SKIP_CONNECTION
NONE = OperationKind.NONE

BIG = 1e6


def identity_model(class_ids=(0, 1), attr_dim=2):
    """Hand-designed head with identity weights; f_v and g pass positive inputs through."""
    eye = np.eye(2)
    zeros = np.zeros(2)
    return S2vModel(
        fv_weight=Tensor(eye, requires_grad=True),
        fv_bias=Tensor(zeros, requires_grad=True),
        projection=Tensor(np.eye(attr_dim, 2), requires_grad=True),
        head_weights={
            "hand.1.weight": Tensor(eye, requires_grad=True),
            "hand.1.bias": Tensor(zeros, requires_grad=True),
            "hand.2.weight": Tensor(eye, requires_grad=True),
            "hand.2.bias": Tensor(zeros, requires_grad=True),
        },
        adjacency=np.full((len(class_ids), len(class_ids)), 1.0 / len(class_ids)),
        class_ids=class_ids,
    )


def searched_model(seed=0, n_classes=4, channels=3, attr_dim=3, embed_dim=4, n_nodes=2):
    rng = make_rng(seed, 21)
    attributes = rng.uniform(0.1, 1.0, size=(n_classes, attr_dim))
    model = S2vModel.initialize(
        rng, channels, attr_dim, embed_dim, range(n_classes), build_adjacency(attributes, 2), n_nodes=n_nodes
    )
    return model, attributes, rng


def one_hot_alpha(cell: CellSpec) -> ArchParams:
    alpha = {}
    for edge, kind in cell.edges():
        scores = np.full(len(OperationKind), -BIG)
        scores[kind.index] = BIG
        alpha[edge] = Tensor(scores, requires_grad=True)
    return ArchParams(n_nodes=cell.n_nodes, alpha=alpha)


class EmbedVisualTests(unittest.TestCase):
    def test_pooling_constant_map(self):
        assert_allclose(global_average_pool(Tensor(np.full((3, 2, 4), 1.5))).data, np.full(4, 1.5))

    def test_unit_norm(self):
        model, _, rng = searched_model()
        out = embed_visual(Tensor(rng.normal(size=(5, 2, 2, 3))), model).data
        assert_allclose(np.linalg.norm(out, axis=1), np.ones(5), atol=1e-12)

    def test_single_map_matches_batch(self):
        model, _, rng = searched_model(3)
        maps = rng.normal(size=(3, 2, 2, 3))
        batch = embed_visual(Tensor(maps), model).data
        for index in range(3):
            single = embed_visual(Tensor(maps[index]), model).data
            self.assertEqual(single.shape, (4,))
            assert_allclose(single, batch[index], atol=1e-12)

    def test_initialized_model_has_no_zero_rows(self):
        for seed in range(10):
            model, _, rng = searched_model(seed)
            maps = -np.abs(rng.normal(size=(20, 2, 2, 3))) * 5.0
            out = embed_visual(Tensor(np.concatenate([maps, -maps, np.zeros((1, 2, 2, 3))])), model).data
            assert_allclose(np.linalg.norm(out, axis=1), np.ones(41), atol=1e-12)

    def test_hand_computed(self):
        model = identity_model()
        model.fv_bias.data = np.array([0.0, 1.0])
        out = embed_visual(Tensor([[[1.0, 2.0]]]), model).data
        assert_allclose(out, np.array([1.0, 3.0]) / math.sqrt(10.0), atol=1e-15)

    def test_zero_embedding(self):
        with self.assertRaises(NumericError):
            embed_visual(Tensor([[[-1.0, -2.0]]]), identity_model())


class GraphConvTests(unittest.TestCase):
    h = np.array([[1.0, -1.0], [3.0, 1.0]])

    def test_identity_graph(self):
        assert_allclose(graph_conv(Tensor(self.h), np.eye(2), Tensor(np.eye(2))).data, np.maximum(self.h, 0))

    def test_uniform_graph_smooths_rows(self):
        out = graph_conv(Tensor(make_rng(0).normal(size=(3, 4))), np.full((3, 3), 1 / 3), Tensor(np.eye(4))).data
        assert_allclose(out, np.tile(out[0], (3, 1)), atol=1e-15)

    def test_hand_computed(self):
        adjacency = np.array([[0.5, 0.5], [0.25, 0.75]])
        weight = np.array([[1.0, 0.0], [0.0, -1.0]])
        out = graph_conv(Tensor(self.h), adjacency, Tensor(weight)).data
        # Â·h = [[2, 0], [2.5, 0.5]]
        assert_allclose(out, [[2.0, 0.0], [2.5, 0.0]], atol=1e-15)

    def test_unnormalized_adjacency(self):
        with self.assertRaises(ValidationError):
            graph_conv(Tensor(self.h), np.ones((2, 2)), Tensor(np.eye(2)))


class AdjacencyTests(unittest.TestCase):
    def test_identical_attributes(self):
        adjacency = build_adjacency(np.ones((4, 3)), top_k=3)
        assert_allclose(adjacency, np.full((4, 4), 0.25), atol=1e-15)
        sparse = build_adjacency(np.ones((4, 3)), top_k=1)
        assert_allclose(np.sort(sparse, axis=1)[:, -2:], np.full((4, 2), 0.5), atol=1e-15)

    def test_dense_similarity(self):
        attributes = make_rng(1).uniform(0.1, 1.0, size=(4, 5))
        unit = attributes / np.linalg.norm(attributes, axis=1, keepdims=True)
        similarity = unit @ unit.T
        assert_allclose(build_adjacency(attributes, 3), similarity / similarity.sum(axis=1, keepdims=True), atol=1e-12)

    def test_hand_computed_sparse_rows(self):
        r = 1.0 / math.sqrt(2.0)
        expected = np.array([[1.0, r, 0.0], [r, 1.0, 0.0], [0.0, r, 1.0]]) / (1.0 + r)
        assert_allclose(build_adjacency(np.array([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]), 1), expected, atol=1e-12)

    def test_scale_invariance(self):
        attributes = make_rng(2).uniform(0.1, 1.0, size=(5, 3))
        scaled = attributes * np.array([[2.0], [0.5], [7.0], [1.0], [3.0]])
        assert_allclose(build_adjacency(attributes, 2), build_adjacency(scaled, 2), atol=1e-12)

    def test_invalid_inputs(self):
        with self.assertRaises(ValidationError):
            build_adjacency(np.array([[1.0, 0.0], [0.0, 0.0]]), 1)
        with self.assertRaises(ValidationError):
            build_adjacency(np.ones((3, 2)), 3)


class MixedOpTests(unittest.TestCase):
    def setUp(self):
        self.model, _, rng = searched_model(3)
        self.h = Tensor(rng.normal(size=(4, 4)))
        self.edge = (0, 1)

    def set_alpha(self, scores):
        self.model.arch.alpha[self.edge].data = np.asarray(scores, dtype=np.float64)

    def single_outputs(self):
        return {kind: apply_operation(kind, self.h, self.edge, self.model).data for kind in OperationKind}

    def test_one_hot_skip(self):
        self.set_alpha([-BIG, -BIG, BIG, -BIG])
        assert_allclose(mixed_op(self.h, self.edge, self.model).data, self.h.data, atol=1e-9)

    def test_one_hot_none(self):
        self.set_alpha([-BIG, -BIG, -BIG, BIG])
        assert_array_equal(mixed_op(self.h, self.edge, self.model).data, np.zeros((4, 4)))

    def test_equal_scores_average(self):
        self.set_alpha([0.3, 0.3, 0.3, 0.3])
        expected = sum(self.single_outputs().values()) / 4.0
        assert_allclose(mixed_op(self.h, self.edge, self.model).data, expected, atol=1e-12)

    def test_linear_in_softmax_weights(self):
        scores = make_rng(4).normal(size=4)
        self.set_alpha(scores)
        weights = np.exp(scores) / np.exp(scores).sum()
        outputs = self.single_outputs()
        expected = sum(weights[kind.index] * outputs[kind] for kind in OperationKind)
        assert_allclose(mixed_op(self.h, self.edge, self.model).data, expected, atol=1e-12)

    def test_discrete_architecture_rejected(self):
        cell = CellSpec(2, {(0, 1): FC, (0, 2): SKIP, (1, 2): NONE})
        with self.assertRaises(ContractError):
            mixed_op(self.h, self.edge, self.model.with_cell(cell))


class EmbedSemanticTests(unittest.TestCase):
    def test_all_skip_is_normalized_projection(self):
        model, attributes, _ = searched_model(5)
        model = model.with_cell(CellSpec(2, {edge: SKIP for edge in dag_edges(2)}))
        projected = attributes @ model.projection.data
        expected = projected / np.linalg.norm(projected, axis=1, keepdims=True)
        assert_allclose(embed_semantic(Tensor(attributes), model).data, expected, atol=1e-12)

    def test_all_none_in_continuous_mode(self):
        model, attributes, _ = searched_model(6)
        for scores in model.arch.alpha.values():
            scores.data = np.array([-BIG, -BIG, -BIG, BIG])
        with self.assertRaises(NumericError):
            embed_semantic(Tensor(attributes), model)

    def test_single_fc_node_hand_computed(self):
        model = S2vModel(
            fv_weight=Tensor(np.eye(2)),
            fv_bias=Tensor(np.zeros(2)),
            projection=Tensor(np.eye(2)),
            head_weights={
                "edge.0_1.fc.weight": Tensor(np.eye(2)),
                "edge.0_1.fc.bias": Tensor([0.0, 1.0]),
                "edge.0_1.gc.weight": Tensor(np.eye(2)),
            },
            adjacency=np.eye(2),
            class_ids=(0, 1),
            n_nodes=1,
            arch=CellSpec(1, {(0, 1): FC}),
        )
        out = embed_semantic(Tensor([[1.0, -2.0], [0.5, 0.5]]), model).data
        assert_allclose(out, [[1.0, 0.0], np.array([0.5, 1.5]) / math.sqrt(2.5)], atol=1e-15)

    def test_cell_matches_saturated_scores(self):
        model, attributes, _ = searched_model(7, n_nodes=3)
        kinds = list(OperationKind)
        kept = [kind for kind in kinds if kind is not NONE]
        for seed in range(10):
            rng = make_rng(seed, 23)
            operations = {}
            for node in range(1, 4):
                for source in range(node):
                    operations[(source, node)] = kinds[rng.integers(len(kinds))]
                if all(operations[(source, node)] is NONE for source in range(node)):
                    operations[(int(rng.integers(node)), node)] = kept[rng.integers(len(kept))]
            cell = CellSpec(3, operations)
            discrete = embed_semantic(Tensor(attributes), model.with_cell(cell)).data
            continuous = embed_semantic(Tensor(attributes), S2vModel(
                fv_weight=model.fv_weight,
                fv_bias=model.fv_bias,
                projection=model.projection,
                head_weights=model.head_weights,
                adjacency=model.adjacency,
                class_ids=model.class_ids,
                n_nodes=3,
                arch=one_hot_alpha(cell),
            )).data
            assert_allclose(discrete, continuous, atol=1e-6, err_msg=dumps_cell(cell))

    def test_hand_designed_head(self):
        rng = make_rng(8)
        attributes = rng.uniform(0.1, 1.0, size=(3, 4))
        model = S2vModel.initialize(rng, 5, 4, 6, [0, 1, 2], build_adjacency(attributes, 1), head=SemanticHead.HAND_DESIGNED)
        self.assertTrue(model.hand_designed)
        self.assertEqual(model.arch_parameters(), {})
        out = embed_semantic(Tensor(attributes), model).data
        assert_allclose(np.linalg.norm(out, axis=1), np.ones(3), atol=1e-12)

    def test_hand_designed_head_on_zero_and_negative_attributes(self):
        for seed in range(10):
            rng = make_rng(seed, 24)
            attributes = np.vstack([np.zeros(4), -rng.uniform(0.5, 3.0, size=4), rng.uniform(0.5, 3.0, size=4)])
            model = S2vModel.initialize(
                rng, 5, 4, 6, [0, 1, 2], build_adjacency(np.abs(attributes) + 0.1, 1), head=SemanticHead.HAND_DESIGNED
            )
            out = embed_semantic(Tensor(attributes), model).data
            assert_allclose(np.linalg.norm(out, axis=1), np.ones(3), atol=1e-12)


class LossTests(unittest.TestCase):
    def test_cosine_distance_range(self):
        self.assertAlmostEqual(cosine_distance(Tensor([1.0, 2.0]), Tensor([1.0, 2.0])).item(), 0.0, delta=1e-15)
        self.assertAlmostEqual(cosine_distance(Tensor([1.0, 0.0]), Tensor([0.0, 3.0])).item(), 1.0, delta=1e-15)
        self.assertAlmostEqual(cosine_distance(Tensor([1.0, 1.0]), Tensor([-2.0, -2.0])).item(), 2.0, delta=1e-15)
        with self.assertRaises(NumericError):
            cosine_distance(Tensor([0.0, 0.0]), Tensor([1.0, 0.0]))

    def test_s2v_loss_is_mean_distance(self):
        model, attributes, rng = searched_model(9)
        x = rng.normal(size=(3, 2, 2, 3))
        labels = [0, 2, 1]
        with no_grad():
            visual = embed_visual(Tensor(x), model).data
            semantic = embed_semantic(Tensor(attributes), model).data
        expected = np.mean([1.0 - visual[b] @ semantic[labels[b]] for b in range(3)])
        self.assertAlmostEqual(s2v_loss(Tensor(x), labels, model, attributes, [0, 1, 2]).item(), expected, delta=1e-12)

    def test_s2v_loss_rejects_unseen_label(self):
        model, attributes, rng = searched_model(10)
        with self.assertRaises(ValidationError):
            s2v_loss(Tensor(rng.normal(size=(1, 2, 2, 3))), [3], model, attributes, [0, 1, 2])

    def test_cet_aligned_orthogonal_classes(self):
        model = identity_model()
        x = Tensor([[[[2.0, 0.0]]]])
        attributes = np.eye(2)
        for t in (1.0, 0.5, 0.1):
            expected = -math.log(math.exp(1 / t) / (math.exp(1 / t) + 1.0))
            self.assertAlmostEqual(cet_loss(x, [0], model, attributes, [0, 1], t).item(), expected, delta=1e-12)

    def test_cet_decreases_with_temperature(self):
        model = identity_model()
        x = Tensor([[[[2.0, 0.0]]]])
        losses = [cet_loss(x, [0], model, np.eye(2), [0, 1], t).item() for t in (1.0, 0.5, 0.1)]
        self.assertTrue(losses[0] > losses[1] > losses[2])

    def test_cet_uniform_similarities(self):
        model = identity_model()
        loss = cet_loss(Tensor([[[[1.0, 3.0]]]]), [1], model, np.ones((2, 2)), [0, 1], 0.1).item()
        self.assertAlmostEqual(loss, math.log(2.0), delta=1e-12)

    def test_gradients_against_finite_differences(self):
        for seed in range(3):
            model, attributes, rng = searched_model(seed)
            x = rng.normal(size=(3, 2, 2, 3))
            labels = [0, 1, 2]
            params = {**model.parameters(), **model.arch_parameters()}
            for name, fn in (
                ("s2v", lambda: s2v_loss(Tensor(x), labels, model, attributes, [0, 1, 2])),
                ("cet", lambda: cet_loss(Tensor(x), labels, model, attributes, [0, 1, 2], 0.5)),
            ):
                report = check_parameters(fn, params)
                self.assertTrue(report.passed(1e-4), f"{name} seed {seed}: {report.worst()} {report.max_error:.2e}")


class DiscretizeTests(unittest.TestCase):
    def arch(self, scores):
        return ArchParams(n_nodes=2, alpha={edge: Tensor(s) for edge, s in scores.items()})

    def test_dominant_score_and_ties(self):
        cell = discretize(self.arch({(0, 1): [10.0, 0, 0, 0], (0, 2): [0.0, 0, 0, 0], (1, 2): [0.0, 0, 3, 0]}))
        self.assertEqual(cell.operations[(0, 1)], FC)
        self.assertEqual(cell.operations[(0, 2)], FC)
        self.assertEqual(cell.operations[(1, 2)], SKIP)

    def test_promotion_when_all_inputs_none(self):
        arch = self.arch({(0, 1): [0.0, 2, 0, 5], (0, 2): [1.0, 0, 0, 5], (1, 2): [0.0, 0, 3, 5]})
        with self.assertLogs("autos2v.search", level="WARNING"):
            cell = discretize(arch)
        self.assertEqual(cell.operations[(0, 1)], GC)
        self.assertEqual(cell.operations[(0, 2)], NONE)
        self.assertEqual(cell.operations[(1, 2)], SKIP)
        for node in (1, 2):
            self.assertTrue(cell.retained_inputs(node))

    def test_cell_rejects_node_without_input(self):
        with self.assertRaises(ValidationError):
            CellSpec(2, {(0, 1): FC, (0, 2): NONE, (1, 2): NONE})

    def test_summary(self):
        cell = CellSpec(3, {(0, 1): FC, (0, 2): GC, (1, 2): SKIP, (0, 3): NONE, (1, 3): FC, (2, 3): GC})
        summary = cell_summary(cell)
        self.assertEqual(summary.operation_counts, {"fully_connected": 2, "graph_convolution": 2, "skip_connection": 1, "none": 1})
        self.assertEqual(summary.graph_conv_uses, 2)
        self.assertEqual(summary.input_branches, 2)


class CellSerializerTests(unittest.TestCase):
    cell = CellSpec(2, {(0, 1): GC, (0, 2): NONE, (1, 2): FC})

    def test_text_layout(self):
        self.assertEqual(dumps_cell(self.cell), "0 1 graph_convolution\n0 2 none\n1 2 fully_connected\n")

    def test_order_independent(self):
        self.assertEqual(loads_cell("1 2 fully_connected\n0 1 graph_convolution\n0 2 none\n"), self.cell)

    def test_file_round_trip(self):
        import tempfile
        from pathlib import Path

        with tempfile.TemporaryDirectory() as tmp:
            path = save_cell(self.cell, Path(tmp) / "cell.txt")
            self.assertEqual(load_cell(path), self.cell)

    def test_malformed(self):
        for text in ("0 1\n", "0 1 conv\n", "1 1 none\n", "0 1 none\n0 1 none\n", ""):
            with self.assertRaises(ValidationError):
                loads_cell(text)


class PredictTests(unittest.TestCase):
    def test_single_unseen_class(self):
        model, attributes, rng = searched_model(11)
        self.assertEqual(predict_unseen(Tensor(rng.normal(size=(2, 2, 3))), model, attributes, [3]), 3)

    def test_exact_match_and_ties(self):
        model = identity_model(class_ids=(0, 1))
        x = Tensor([[[0.0, 1.0]]])
        self.assertEqual(predict_unseen(x, model, np.eye(2), [0, 1]), 1)
        self.assertEqual(predict_unseen(x, model, np.ones((2, 2)), [0, 1]), 0)

    def test_generalized_searches_all_classes(self):
        model = identity_model(class_ids=(0, 1))
        batch = Tensor([[[[1.0, 0.0]]], [[[0.0, 1.0]]]])
        assert_array_equal(predict_generalized(batch, model, np.eye(2)), [0, 1])
        self.assertEqual(predict_generalized(Tensor([[[3.0, 0.1]]]), model, np.eye(2)), 0)

    def test_with_cell_shares_weights(self):
        model, _, _ = searched_model(12)
        cell = discretize(model.arch)
        discrete = model.with_cell(cell)
        self.assertIs(discrete.projection, model.projection)
        self.assertEqual(discrete.arch, cell)
        self.assertEqual(discrete.arch_parameters(), {})


if __name__ == "__main__":
    unittest.main()
