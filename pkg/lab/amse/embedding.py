"""
Semantic-free embedding f_d.

All functions take either one feature map (W×H×C, or N×C once flattened)
or a batch with a leading axis; the position axis is always second to last.
"""
import logging

from dvbe_lab.exceptions import DimensionError
from numerics import Tensor, as_tensor, ops

from .models import AmseModel, EmbeddingVariant

logger = logging.getLogger(__name__)


def bilinear_pool(x) -> Tensor:
    """Σₙ xₙᵀxₙ over positions: N×C → C×C."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] < 1:
        raise DimensionError(f"bilinear_pool needs at least one position, got shape {x.shape}", (x.shape,))
    return ops.bilinear(x, x)


def reduce_channels(x, weight: Tensor, bias: Tensor) -> Tensor:
    return ops.relu(ops.add(ops.matmul(x, weight), bias))


def attend_spatial(x2, model: AmseModel) -> Tensor:
    """Per-position gate in (0, 1), shape N×1."""
    return ops.sigmoid(ops.add(ops.matmul(x2, model.spatial_weight), model.spatial_bias))


def attend_channel(x1, model: AmseModel) -> Tensor:
    """Per-channel gate in (0, 1), shape 1×D, from the position-mean of x1."""
    pooled = ops.mean(x1, axis=-2, keepdims=True)
    return ops.sigmoid(ops.add(ops.matmul(pooled, model.channel_weight), model.channel_bias))


def flatten_positions(x, channels: int) -> Tensor:
    """W×H×C (or B×W×H×C) → N×C (or B×N×C)."""
    x = as_tensor(x)
    if x.ndim not in (3, 4) or x.shape[-1] != channels:
        raise DimensionError(f"Feature map shape {x.shape} does not end in C={channels}", (x.shape, (channels,)))
    leading = x.shape[:-3]
    return ops.reshape(x, leading + (x.shape[-3] * x.shape[-2], channels))


def _second_order(x1: Tensor, x2: Tensor, model: AmseModel) -> Tensor:
    if model.variant is EmbeddingVariant.BILINEAR:
        return ops.bilinear(x1, x2)
    if model.variant is EmbeddingVariant.CROSS_ATTENTIVE:
        # spatial gate from branch 2 weights branch 1, channel gate from branch 1 weights branch 2
        a = ops.mul(attend_spatial(x2, model), x1)
        b = ops.mul(attend_channel(x1, model), x2)
    else:
        a = ops.mul(attend_spatial(x1, model), x1)
        b = ops.mul(attend_channel(x2, model), x2)
    return ops.bilinear(a, b)


def embed(x, model: AmseModel) -> Tensor:
    """
    f_d(x): a D²-vector (D for the first-order variant) per feature map.

    With use_normalization the second-order output goes through signed
    square root then L2 normalization; first-order output is only L2
    normalized.
    """
    positions = flatten_positions(x, model.channels)
    x1 = reduce_channels(positions, model.reduce1_weight, model.reduce1_bias)
    leading = positions.shape[:-2]

    if not model.variant.second_order:
        features = ops.mean(x1, axis=-2)
        return ops.l2_normalize(features) if model.use_normalization else features

    x2 = reduce_channels(positions, model.reduce2_weight, model.reduce2_bias)
    pooled = _second_order(x1, x2, model)
    features = ops.reshape(pooled, leading + (model.feature_width,))
    if model.use_normalization:
        features = ops.l2_normalize(ops.signed_sqrt(features, eps=model.signed_sqrt_eps))
    return features
