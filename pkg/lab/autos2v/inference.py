"""Nearest-neighbour search in the joint space."""
from typing import Sequence

import numpy as np

from dvbe_lab.exceptions import ValidationError
from numerics import as_tensor, no_grad

from .embedding import embed_semantic, embed_visual
from .models import S2vModel


def class_distances(x, model: S2vModel, attributes, candidates: Sequence[int]) -> np.ndarray:
    """Cosine distance from f_v(x) to every candidate's g row: B×|candidates|."""
    with no_grad():
        visual = embed_visual(x, model).data
        semantic = embed_semantic(attributes, model).data[model.class_rows(candidates)]
    return 1.0 - np.atleast_2d(visual) @ semantic.T


def nearest_class(x, model: S2vModel, attributes, candidates: Sequence[int]) -> np.ndarray:
    """Closest candidate per sample; equal distances resolve to the lowest class id."""
    candidates = sorted(int(c) for c in candidates)
    if not candidates:
        raise ValidationError("No candidate classes to search")
    distances = class_distances(x, model, attributes, candidates)
    return np.asarray(candidates)[np.argmin(distances, axis=1)]


def predict_unseen(x, model: S2vModel, attributes, unseen_classes: Sequence[int]):
    """Class id (or array of ids for a batch) among the unseen classes."""
    predictions = nearest_class(x, model, attributes, unseen_classes)
    return int(predictions[0]) if as_tensor(x).ndim == 3 else predictions


def predict_generalized(x, model: S2vModel, attributes, class_ids: Sequence[int] = None):
    """Nearest class over seen and unseen classes together."""
    predictions = nearest_class(x, model, attributes, model.class_ids if class_ids is None else class_ids)
    return int(predictions[0]) if as_tensor(x).ndim == 3 else predictions
