import logging

import numpy as np

from dvbe_lab.exceptions import DimensionError, NumericError
from numerics import Tensor, as_tensor, ops

from .models import HAND_LAYERS, CellSpec, OperationKind, S2vModel
from .operations import apply_operation, fully_connected, mixed_op

logger = logging.getLogger(__name__)

ZERO_NORM = 1e-12


def _guard_rows(h: Tensor, where: str):
    norms = np.linalg.norm(h.data.reshape(-1, h.shape[-1]), axis=1)
    if np.any(norms < ZERO_NORM):
        raise NumericError(f"{where}: zero-norm embedding in {int(np.sum(norms < ZERO_NORM))} row(s)", component=where)


def global_average_pool(x) -> Tensor:
    """W×H×C (or B×W×H×C) → C (or B×C)."""
    x = as_tensor(x)
    if x.ndim not in (3, 4):
        raise DimensionError(f"Expected a W×H×C feature map, got shape {x.shape}", (x.shape,))
    return ops.mean(x, axis=(-3, -2))


def embed_visual(x, model: S2vModel) -> Tensor:
    """f_v(x): GAP, linear + relu, then L2 normalization. One W×H×C map gives an E-vector."""
    x = as_tensor(x)
    if x.ndim not in (3, 4) or x.shape[-1] != model.channels:
        raise DimensionError(f"Feature map shape {x.shape} does not end in C={model.channels}", (x.shape,))
    single = x.ndim == 3
    if single:
        x = ops.reshape(x, (1,) + x.shape)
    hidden = fully_connected(global_average_pool(x), model.fv_weight, model.fv_bias)
    _guard_rows(hidden, "embed_visual")
    out = ops.l2_normalize(hidden)
    return ops.reshape(out, (model.embed_dim,)) if single else out


def _hand_designed(h0: Tensor, model: S2vModel) -> Tensor:
    """relu layers, the last one linear."""
    h = h0
    for layer in range(1, HAND_LAYERS + 1):
        weight, bias = model.weight(f"hand.{layer}.weight"), model.weight(f"hand.{layer}.bias")
        h = fully_connected(h, weight, bias) if layer < HAND_LAYERS else ops.add(ops.matmul(h, weight), bias)
    return h


def _dag(h0: Tensor, model: S2vModel) -> Tensor:
    nodes = [h0]
    for j in range(1, model.n_nodes + 1):
        node = None
        for i in range(j):
            if isinstance(model.arch, CellSpec):
                kind = model.arch.operations[(i, j)]
                if kind is OperationKind.NONE:
                    continue
                term = apply_operation(kind, nodes[i], (i, j), model)
            else:
                term = mixed_op(nodes[i], (i, j), model)
            node = term if node is None else ops.add(node, term)
        nodes.append(node)
    out = nodes[1]
    for node in nodes[2:]:
        out = ops.add(out, node)
    return out


def embed_semantic(attributes, model: S2vModel) -> Tensor:
    """
    g over every class: K×A attributes (rows in model.class_ids order) → K×E,
    each row L2 normalized.
    """
    attributes = as_tensor(attributes)
    if attributes.shape != (len(model.class_ids), model.attr_dim):
        raise DimensionError(
            f"Attribute matrix shape {attributes.shape}, expected {(len(model.class_ids), model.attr_dim)}",
            (attributes.shape,),
        )
    h0 = ops.matmul(attributes, model.projection)
    out = _hand_designed(h0, model) if model.hand_designed else _dag(h0, model)
    _guard_rows(out, "embed_semantic")
    return ops.l2_normalize(out)


def select_rows(h: Tensor, rows: np.ndarray) -> Tensor:
    """Differentiable row gather through a one-hot matmul."""
    picker = np.zeros((len(rows), h.shape[0]))
    picker[np.arange(len(rows)), rows] = 1.0
    return ops.matmul(Tensor(picker), h)
