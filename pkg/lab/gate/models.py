import math
from typing import Optional

import attrs
import numpy as np
from attrs import validators

from dataio.models import Domain


def _finite(instance, attribute, value):
    if not math.isfinite(value):
        raise ValueError(f"{attribute.name} must be finite, got {value}")


@attrs.frozen
class GateConfig:
    """Entropy threshold τ and the percentile used to calibrate it."""
    tau: float = attrs.field(default=1.0, converter=float, validator=[_finite, validators.ge(0)])
    calibration_percentile: float = attrs.field(
        default=95.0, converter=float, validator=[validators.gt(0), validators.lt(100)]
    )


@attrs.frozen
class Prediction:
    class_id: int
    domain_decision: Domain = attrs.field(converter=Domain)
    entropy: float
    scores: Optional[np.ndarray] = attrs.field(default=None, eq=False)


@attrs.frozen
class RoutedBatch:
    """Gate output for a batch, aligned with the input order."""
    class_ids: np.ndarray = attrs.field(eq=attrs.cmp_using(eq=np.array_equal))
    decisions: tuple
    entropies: np.ndarray = attrs.field(eq=attrs.cmp_using(eq=np.array_equal))

    @property
    def routed_seen(self) -> int:
        return sum(1 for d in self.decisions if d is Domain.SEEN)
