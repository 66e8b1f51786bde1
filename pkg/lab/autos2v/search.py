"""Discretization of the relaxed architecture and summaries of searched cells."""
import logging
from typing import Dict

import attrs
import numpy as np

from dvbe_lab.exceptions import ContractError

from .models import ArchParams, CellSpec, OperationKind, dag_edges

logger = logging.getLogger(__name__)


def _edge_weights(arch: ArchParams, edge) -> np.ndarray:
    scores = arch.alpha[edge].data
    weights = np.exp(scores - scores.max())
    return weights / weights.sum()


def discretize(arch: ArchParams) -> CellSpec:
    """
    Per-edge argmax of softmax(α); np.argmax keeps the lowest index on ties.
    A node whose every input chose none keeps its best non-none edge.
    """
    if not isinstance(arch, ArchParams):
        raise ContractError("discretize needs continuous architecture scores")
    chosen = {edge: OperationKind.from_index(np.argmax(_edge_weights(arch, edge))) for edge in dag_edges(arch.n_nodes)}

    none_index = OperationKind.NONE.index
    for node in range(1, arch.n_nodes + 1):
        inputs = [(i, node) for i in range(node)]
        if any(chosen[edge] is not OperationKind.NONE for edge in inputs):
            continue
        best_edge, best_kind, best_weight = None, None, -1.0
        for edge in inputs:
            weights = _edge_weights(arch, edge)
            for kind in OperationKind:
                if kind.index != none_index and weights[kind.index] > best_weight:
                    best_edge, best_kind, best_weight = edge, kind, weights[kind.index]
        chosen[best_edge] = best_kind
        logger.warning(f"Node {node}: every input chose none; promoted edge {best_edge} to {best_kind.value}")

    return CellSpec(n_nodes=arch.n_nodes, operations=chosen)


@attrs.frozen
class CellSummary:
    operation_counts: Dict[str, int]
    graph_conv_uses: int
    input_branches: int

    def describe(self) -> str:
        counts = ", ".join(f"{name}={count}" for name, count in self.operation_counts.items())
        return f"{counts}; graph convolutions: {self.graph_conv_uses}; branches from input: {self.input_branches}"


def cell_summary(cell: CellSpec) -> CellSummary:
    counts = {kind.value: 0 for kind in OperationKind}
    for _, kind in cell.edges():
        counts[kind.value] += 1
    branches = sum(1 for (i, _), kind in cell.edges() if i == 0 and kind is not OperationKind.NONE)
    return CellSummary(
        operation_counts=counts,
        graph_conv_uses=counts[OperationKind.GRAPH_CONVOLUTION.value],
        input_branches=branches,
    )
