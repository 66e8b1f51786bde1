"""Types GZSL partagés : étiquettes sémantiques, échantillons, jeux de données."""
import enum
import math
from typing import Dict, Iterator, Optional, Sequence, Tuple

import attrs
import numpy as np
from attrs import validators

from dvbe_lab.exceptions import ValidationError

SPLITS = ("train_seen", "val_seen", "test_seen", "test_unseen")


class Domain(str, enum.Enum):
    SEEN = "seen"
    UNSEEN = "unseen"


class SampleFlag(enum.IntEnum):
    """Per-sample tag in the features file"""
    SEEN_TRAINVAL = 0
    UNSEEN = 1
    SEEN_TEST = 2


def held_out_count(n: int, fraction: float) -> int:
    """Samples taken from the tail of a class group; at least one stays behind."""
    if n <= 1:
        return 0
    return min(n - 1, int(math.floor(n * fraction + 0.5)))


def _readonly(array) -> np.ndarray:
    array = np.array(array, dtype=np.float64)
    array.setflags(write=False)
    return array


@attrs.frozen
class SemanticLabel:
    class_id: int
    attributes: np.ndarray = attrs.field(converter=_readonly, eq=attrs.cmp_using(eq=np.array_equal))

    def __attrs_post_init__(self):
        if self.attributes.ndim != 1 or self.attributes.size == 0:
            raise ValidationError(f"Class {self.class_id}: attributes must be a non-empty vector")
        if not np.any(self.attributes):
            raise ValidationError(f"Class {self.class_id}: all-zero attribute vector")


@attrs.frozen
class Sample:
    feature: np.ndarray = attrs.field(converter=_readonly, eq=attrs.cmp_using(eq=np.array_equal))
    label: int
    domain: Domain = attrs.field(converter=Domain)


@attrs.frozen
class Batch:
    features: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)


@attrs.frozen
class SynthConfig:
    n_seen: int = attrs.field(default=8, validator=validators.gt(0))
    n_unseen: int = attrs.field(default=4, validator=validators.gt(0))
    attr_dim: int = attrs.field(default=16, validator=validators.gt(0))
    feat_dims: Tuple[int, int, int] = attrs.field(default=(4, 4, 32), converter=tuple)
    samples_per_class: int = attrs.field(default=50, validator=validators.gt(0))
    noise_scale: float = attrs.field(default=1.0, validator=validators.gt(0))
    seed: int = attrs.field(default=1, validator=validators.ge(0))
    val_fraction: float = attrs.field(default=0.2, validator=[validators.ge(0), validators.lt(1)])
    test_fraction: float = attrs.field(default=0.2, validator=[validators.ge(0), validators.lt(1)])
    mean_scale: float = attrs.field(default=3.0, validator=validators.gt(0))

    @feat_dims.validator
    def _check_dims(self, attribute, value):
        if len(value) != 3 or any(int(v) <= 0 for v in value):
            raise ValueError(f"feat_dims must be three positive ints, got {value}")


@attrs.frozen
class GzslDataset:
    train_seen: Tuple[Sample, ...] = attrs.field(converter=tuple)
    val_seen: Tuple[Sample, ...] = attrs.field(converter=tuple)
    test_seen: Tuple[Sample, ...] = attrs.field(converter=tuple)
    test_unseen: Tuple[Sample, ...] = attrs.field(converter=tuple)
    semantics: Tuple[SemanticLabel, ...] = attrs.field(converter=tuple)
    seen_classes: frozenset = attrs.field(converter=frozenset)
    unseen_classes: frozenset = attrs.field(converter=frozenset)
    val_fraction: float = 0.2

    def __attrs_post_init__(self):
        validate_dataset(self)

    @property
    def feature_dims(self) -> Tuple[int, int, int]:
        return tuple(self.train_seen[0].feature.shape)

    @property
    def attr_dim(self) -> int:
        return self.semantics[0].attributes.size

    @property
    def class_ids(self) -> Tuple[int, ...]:
        return tuple(sorted(self.seen_classes | self.unseen_classes))

    @property
    def sorted_seen(self) -> Tuple[int, ...]:
        return tuple(sorted(self.seen_classes))

    @property
    def sorted_unseen(self) -> Tuple[int, ...]:
        return tuple(sorted(self.unseen_classes))

    def semantic_for(self, class_id: int) -> SemanticLabel:
        return self._semantic_index()[class_id]

    def _semantic_index(self) -> Dict[int, SemanticLabel]:
        return {label.class_id: label for label in self.semantics}

    def attribute_matrix(self, class_ids: Sequence[int] = None) -> np.ndarray:
        return attribute_matrix(self.semantics, class_ids or self.class_ids)

    def split(self, name: str) -> Tuple[Sample, ...]:
        if name not in SPLITS:
            raise ValidationError(f"Unknown split {name!r}; expected one of {SPLITS}")
        return getattr(self, name)

    def stack(self, name: str) -> Batch:
        samples = self.split(name)
        if not samples:
            raise ValidationError(f"Split {name} is empty")
        features = np.stack([s.feature for s in samples])
        labels = np.array([s.label for s in samples], dtype=np.int64)
        return Batch(features=features, labels=labels)

    def batches(self, name: str, batch_size: int, rng: Optional[np.random.Generator] = None) -> Iterator[Batch]:
        """Minibatches of a split, shuffled when an rng is given."""
        stacked = self.stack(name)
        order = np.arange(len(stacked)) if rng is None else rng.permutation(len(stacked))
        for start in range(0, len(order), batch_size):
            index = order[start:start + batch_size]
            yield Batch(features=stacked.features[index], labels=stacked.labels[index])


def attribute_matrix(semantics: Sequence[SemanticLabel], class_ids: Sequence[int]) -> np.ndarray:
    """Rows of attribute vectors in the order of class_ids."""
    index = {label.class_id: label for label in semantics}
    missing = [c for c in class_ids if c not in index]
    if missing:
        raise ValidationError(f"Missing semantic label for classes {missing}")
    return np.stack([index[c].attributes for c in class_ids])


def validate_dataset(dataset: GzslDataset):
    """Vérifie les invariants GZSL ; lève ValidationError au premier problème."""
    seen, unseen = dataset.seen_classes, dataset.unseen_classes
    overlap = seen & unseen
    if overlap:
        raise ValidationError(f"Classes listed as both seen and unseen: {sorted(overlap)}")
    if not seen or not unseen:
        raise ValidationError("Both seen and unseen class sets must be non-empty")

    lengths = {label.attributes.size for label in dataset.semantics}
    if len(lengths) > 1:
        raise ValidationError(f"Attribute length differs across classes: {sorted(lengths)}")
    ids = [label.class_id for label in dataset.semantics]
    if len(ids) != len(set(ids)):
        raise ValidationError("A class has more than one semantic label")
    missing = sorted((seen | unseen) - set(ids))
    if missing:
        raise ValidationError(f"Missing class attributes for {missing}")

    if not dataset.train_seen:
        raise ValidationError("train_seen is empty")
    dims = dataset.train_seen[0].feature.shape
    for name, allowed, domain in (
        ("train_seen", seen, Domain.SEEN),
        ("val_seen", seen, Domain.SEEN),
        ("test_seen", seen, Domain.SEEN),
        ("test_unseen", unseen, Domain.UNSEEN),
    ):
        for sample in getattr(dataset, name):
            if sample.label not in allowed:
                raise ValidationError(f"{name} contains class {sample.label} outside its class set")
            if sample.domain != domain:
                raise ValidationError(f"{name} sample of class {sample.label} tagged {sample.domain.value}")
            if sample.feature.shape != dims:
                raise ValidationError(f"{name} feature shape {sample.feature.shape} differs from {dims}")
