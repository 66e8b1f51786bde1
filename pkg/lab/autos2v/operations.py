"""Edge operations of the semantic DAG and the class graph they share."""
import logging

import numpy as np

from dvbe_lab.exceptions import ContractError, ValidationError
from numerics import Tensor, as_tensor, ops

from .models import ArchParams, Edge, OperationKind, S2vModel, edge_key

logger = logging.getLogger(__name__)

ROW_SUM_TOLERANCE = 1e-9


def build_adjacency(attributes: np.ndarray, top_k: int) -> np.ndarray:
    """
    Cosine-similarity graph over classes (rows of `attributes`). Each row
    keeps itself plus its top_k most similar classes, ties to the lower
    index; negative similarities are clipped to zero; rows sum to one.
    """
    attributes = np.asarray(attributes, dtype=np.float64)
    k = attributes.shape[0]
    if k < 2:
        raise ValidationError(f"Adjacency needs at least two classes, got {k}")
    if not 1 <= top_k < k:
        raise ValidationError(f"top_k must be in [1, {k - 1}], got {top_k}")
    norms = np.linalg.norm(attributes, axis=1)
    if np.any(norms == 0):
        raise ValidationError(f"Zero attribute vector for class rows {np.flatnonzero(norms == 0).tolist()}")

    unit = attributes / norms[:, None]
    similarity = np.clip(unit @ unit.T, 0.0, None)
    adjacency = np.zeros((k, k))
    for row in range(k):
        others = [j for j in np.argsort(-similarity[row], kind="stable") if j != row][:top_k]
        keep = [row, *others]
        adjacency[row, keep] = similarity[row, keep]
    return adjacency / adjacency.sum(axis=1, keepdims=True)


def check_row_normalized(adjacency: np.ndarray):
    adjacency = np.asarray(adjacency)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ValidationError(f"Adjacency must be square, got shape {adjacency.shape}")
    deviation = np.abs(adjacency.sum(axis=1) - 1.0).max()
    if deviation > ROW_SUM_TOLERANCE:
        raise ValidationError(f"Adjacency rows must sum to 1 (max deviation {deviation:.3e})")


def graph_conv(h, adjacency, weight) -> Tensor:
    """relu(Â·h·W) over the class graph."""
    adjacency = adjacency.data if isinstance(adjacency, Tensor) else np.asarray(adjacency, dtype=np.float64)
    check_row_normalized(adjacency)
    return ops.relu(ops.matmul(ops.matmul(Tensor(adjacency), h), weight))


def fully_connected(h, weight, bias) -> Tensor:
    return ops.relu(ops.add(ops.matmul(h, weight), bias))


def apply_operation(kind: OperationKind, h, edge: Edge, model: S2vModel) -> Tensor:
    h = as_tensor(h)
    key = edge_key(edge)
    if kind is OperationKind.FULLY_CONNECTED:
        return fully_connected(h, model.weight(f"edge.{key}.fc.weight"), model.weight(f"edge.{key}.fc.bias"))
    if kind is OperationKind.GRAPH_CONVOLUTION:
        return graph_conv(h, model.adjacency, model.weight(f"edge.{key}.gc.weight"))
    if kind is OperationKind.SKIP_CONNECTION:
        return h
    return Tensor(np.zeros(h.shape))


def mixed_op(h_in, edge: Edge, model: S2vModel) -> Tensor:
    """Σ_c softmax(α_edge)_c · op_c(h_in); the none operation adds nothing."""
    if not isinstance(model.arch, ArchParams):
        raise ContractError(f"mixed_op on edge {edge} needs continuous architecture scores")
    h_in = as_tensor(h_in)
    weights = ops.softmax(model.arch.alpha[edge])
    out = None
    for kind in OperationKind:
        if kind is OperationKind.NONE:
            continue
        selector = np.zeros(len(OperationKind))
        selector[kind.index] = 1.0
        term = ops.mul(apply_operation(kind, h_in, edge, model), ops.sum(ops.mul(weights, selector)))
        out = term if out is None else ops.add(out, term)
    return out
