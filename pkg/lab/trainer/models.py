"""Configuration d'entraînement, journal par époque et conteneur des deux branches."""
from typing import Dict, List

import attrs
import numpy as np
from attrs import validators

from amse.models import AmseModel, MarginConfig, MarginMode
from autos2v.models import S2vModel
from dvbe_lab.exceptions import NumericError
from numerics import Tensor


@attrs.frozen
class TrainConfig:
    lr: float = attrs.field(default=0.001, converter=float, validator=validators.ge(0))
    momentum: float = attrs.field(default=0.9, converter=float, validator=[validators.ge(0), validators.lt(1)])
    epochs_stage1: int = attrs.field(default=10, converter=int, validator=validators.ge(0))
    epochs_stage2: int = attrs.field(default=20, converter=int, validator=validators.ge(0))
    batch_size: int = attrs.field(default=16, converter=int, validator=validators.gt(0))
    gamma: float = attrs.field(default=1.0, converter=float, validator=validators.ge(0))
    sigma: float = attrs.field(default=0.5, converter=float, validator=validators.gt(0))
    seed: int = attrs.field(default=1, converter=int, validator=[validators.ge(0), validators.lt(2 ** 64)])
    margin_mode: MarginMode = attrs.field(default=MarginMode.ADAPTIVE, converter=MarginMode)
    fixed_lambda: float = attrs.field(default=0.8, converter=float, validator=[validators.gt(0), validators.le(1)])
    cet_temperature: float = attrs.field(default=0.1, converter=float, validator=validators.gt(0))

    @property
    def margin(self) -> MarginConfig:
        return MarginConfig(mode=self.margin_mode, sigma=self.sigma, fixed_lambda=self.fixed_lambda)


TRAINLOG_COLUMNS = ("epoch", "l_s2v", "l_ams", "l_cet", "l_all", "val_acc", "val_entropy")


@attrs.frozen
class EpochRecord:
    epoch: int
    l_s2v: float
    l_ams: float
    l_cet: float
    l_all: float
    val_acc: float
    val_entropy: float

    def __attrs_post_init__(self):
        values = [getattr(self, name) for name in TRAINLOG_COLUMNS[1:]]
        if not np.all(np.isfinite(values)):
            raise NumericError(f"Epoch {self.epoch}: non-finite training record", component="train_log")


@attrs.define
class TrainLog:
    stage: str
    records: List[EpochRecord] = attrs.Factory(list)

    def append(self, record: EpochRecord):
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> List[float]:
        return [getattr(record, name) for record in self.records]


@attrs.define(eq=False)
class DvbeModels:
    """The semantic-free (AMSE) and semantic-aligned (S2V) branches; they share only the input feature."""
    amse: AmseModel
    s2v: S2vModel

    def weight_parameters(self) -> Dict[str, Tensor]:
        params = {f"amse.{name}": tensor for name, tensor in self.amse.parameters().items()}
        params.update((f"s2v.{name}", tensor) for name, tensor in self.s2v.parameters().items())
        return params

    def arch_parameters(self) -> Dict[str, Tensor]:
        return {f"s2v.{name}": tensor for name, tensor in self.s2v.arch_parameters().items()}

    def snapshot(self) -> Dict[str, np.ndarray]:
        """Copies of every parameter array, architecture scores included."""
        return {name: tensor.data.copy() for name, tensor in {**self.weight_parameters(), **self.arch_parameters()}.items()}
