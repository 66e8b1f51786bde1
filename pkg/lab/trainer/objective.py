import logging

import attrs
import numpy as np

from amse.embedding import embed
from amse.losses import ams_loss
from autos2v.losses import cet_loss, s2v_loss
from dvbe_lab.exceptions import NumericError
from numerics import Tensor, ops

from .models import DvbeModels, TrainConfig

logger = logging.getLogger(__name__)


@attrs.frozen
class LossBreakdown:
    total: Tensor = attrs.field(eq=False)
    l_s2v: float
    l_ams: float
    l_cet: float

    @property
    def l_all(self) -> float:
        return self.total.item()


def _component(name: str, compute) -> Tensor:
    try:
        value = compute()
    except NumericError as exc:
        raise NumericError(f"{name}: {exc}", component=name, error_code=exc.error_code)
    if not np.isfinite(value.item()):
        raise NumericError(f"{name} is not finite", component=name)
    return value


def overall_loss(features, labels, models: DvbeModels, attributes, seen_classes, config: TrainConfig) -> LossBreakdown:
    """L_all = L_s2v + L_ams + γ·L_cet; the two branches only share `features`."""
    features = features if isinstance(features, Tensor) else Tensor(features)
    l_s2v = _component("l_s2v", lambda: s2v_loss(features, labels, models.s2v, attributes, seen_classes))
    l_ams = _component("l_ams", lambda: ams_loss(embed(features, models.amse), labels, models.amse, config.margin))
    l_cet = _component(
        "l_cet", lambda: cet_loss(features, labels, models.s2v, attributes, seen_classes, config.cet_temperature)
    )
    total = ops.add(ops.add(l_s2v, l_ams), ops.scale(l_cet, config.gamma))
    return LossBreakdown(total=total, l_s2v=l_s2v.item(), l_ams=l_ams.item(), l_cet=l_cet.item())
