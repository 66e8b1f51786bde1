"""Paramètres de la branche sans sémantique (AMSE) et configuration de la marge."""
import enum
from typing import Dict, Iterable, Sequence

import attrs
import numpy as np
from attrs import validators

from dvbe_lab.exceptions import ValidationError
from numerics import Tensor
from numerics.rng import msra_normal


class EmbeddingVariant(str, enum.Enum):
    """Embedding f_d flavours, from first-order pooling to cross-attentive bilinear"""
    FIRST_ORDER = "first_order"
    BILINEAR = "bilinear"
    ATTENTIVE = "attentive"
    CROSS_ATTENTIVE = "cross_attentive"

    @property
    def second_order(self) -> bool:
        return self is not EmbeddingVariant.FIRST_ORDER

    @property
    def attended(self) -> bool:
        return self in (EmbeddingVariant.ATTENTIVE, EmbeddingVariant.CROSS_ATTENTIVE)


class MarginMode(str, enum.Enum):
    STANDARD = "standard"
    FIXED = "fixed"
    ADAPTIVE = "adaptive"


@attrs.frozen
class MarginConfig:
    mode: MarginMode = attrs.field(default=MarginMode.ADAPTIVE, converter=MarginMode)
    sigma: float = attrs.field(default=0.5, converter=float, validator=validators.gt(0))
    fixed_lambda: float = attrs.field(default=0.8, converter=float, validator=[validators.gt(0), validators.le(1)])


@attrs.define(eq=False)
class AmseModel:
    """
    Cross-attentive second-order embedding plus a bias-free |Y_s|-way classifier.

    Weights follow the row-vector convention: a position x (1×C) is reduced
    by x·reduce1_weight + reduce1_bias. The classifier has one row per seen
    class in ascending class-id order.
    """
    reduce1_weight: Tensor
    reduce1_bias: Tensor
    reduce2_weight: Tensor
    reduce2_bias: Tensor
    spatial_weight: Tensor
    spatial_bias: Tensor
    channel_weight: Tensor
    channel_bias: Tensor
    classifier: Tensor
    seen_classes: tuple = attrs.field(converter=lambda ids: tuple(sorted(int(c) for c in ids)))
    variant: EmbeddingVariant = attrs.field(default=EmbeddingVariant.CROSS_ATTENTIVE, converter=EmbeddingVariant)
    use_normalization: bool = True
    signed_sqrt_eps: float = 1e-8

    def __attrs_post_init__(self):
        channels, reduced = self.reduce1_weight.shape
        if reduced > channels:
            raise ValidationError(f"Reduced width D={reduced} exceeds channel count C={channels}")
        if self.reduce2_weight.shape != (channels, reduced):
            raise ValidationError(f"reduce2 shape {self.reduce2_weight.shape} differs from reduce1 {(channels, reduced)}")
        expected = (len(self.seen_classes), self.feature_width)
        if self.classifier.shape != expected:
            raise ValidationError(f"Classifier shape {self.classifier.shape}, expected {expected}")

    @property
    def channels(self) -> int:
        return self.reduce1_weight.shape[0]

    @property
    def reduced_dim(self) -> int:
        return self.reduce1_weight.shape[1]

    @property
    def feature_width(self) -> int:
        return self.reduced_dim ** 2 if self.variant.second_order else self.reduced_dim

    def parameters(self) -> Dict[str, Tensor]:
        return {
            "reduce1_weight": self.reduce1_weight,
            "reduce1_bias": self.reduce1_bias,
            "reduce2_weight": self.reduce2_weight,
            "reduce2_bias": self.reduce2_bias,
            "spatial_weight": self.spatial_weight,
            "spatial_bias": self.spatial_bias,
            "channel_weight": self.channel_weight,
            "channel_bias": self.channel_bias,
            "classifier": self.classifier,
        }

    def label_index(self, labels: Iterable[int]) -> np.ndarray:
        """Map class ids to classifier rows; unknown ids raise ValidationError."""
        rows = {class_id: row for row, class_id in enumerate(self.seen_classes)}
        labels = [int(label) for label in np.asarray(labels).reshape(-1)]
        unknown = sorted({label for label in labels if label not in rows})
        if unknown:
            raise ValidationError(f"Labels {unknown} are not seen classes")
        return np.array([rows[label] for label in labels], dtype=np.int64)

    @classmethod
    def initialize(
        cls,
        rng: np.random.Generator,
        channels: int,
        reduced_dim: int,
        seen_classes: Sequence[int],
        variant=EmbeddingVariant.CROSS_ATTENTIVE,
        use_normalization: bool = True,
        signed_sqrt_eps: float = 1e-8,
    ) -> "AmseModel":
        """MSRA-initialized weights, zero biases."""
        variant = EmbeddingVariant(variant)
        if reduced_dim <= 0 or reduced_dim > channels:
            raise ValidationError(f"Reduced width must be in [1, {channels}], got {reduced_dim}")
        width = reduced_dim ** 2 if variant.second_order else reduced_dim

        def weight(name, shape):
            return Tensor(msra_normal(rng, shape), requires_grad=True, name=name)

        def bias(name, size):
            return Tensor(np.zeros(size), requires_grad=True, name=name)

        return cls(
            reduce1_weight=weight("reduce1_weight", (channels, reduced_dim)),
            reduce1_bias=bias("reduce1_bias", reduced_dim),
            reduce2_weight=weight("reduce2_weight", (channels, reduced_dim)),
            reduce2_bias=bias("reduce2_bias", reduced_dim),
            spatial_weight=weight("spatial_weight", (reduced_dim, 1)),
            spatial_bias=bias("spatial_bias", 1),
            channel_weight=weight("channel_weight", (reduced_dim, reduced_dim)),
            channel_bias=bias("channel_bias", reduced_dim),
            classifier=Tensor(msra_normal(rng, (len(seen_classes), width), fan_in=width), requires_grad=True, name="classifier"),
            seen_classes=seen_classes,
            variant=variant,
            use_normalization=use_normalization,
            signed_sqrt_eps=signed_sqrt_eps,
        )
