"""Alignment losses in the joint semantic-visual space."""
import numpy as np

from dvbe_lab.exceptions import NumericError, ValidationError
from numerics import Tensor, as_tensor, ops

from .embedding import embed_semantic, embed_visual, select_rows
from .models import S2vModel


def cosine_distance(u, v) -> Tensor:
    """1 − u·v / (‖u‖‖v‖) along the last axis; range [0, 2]."""
    u, v = as_tensor(u), as_tensor(v)
    for name, t in (("u", u), ("v", v)):
        if np.any(np.linalg.norm(t.data, axis=-1) == 0):
            raise NumericError(f"cosine distance of a zero vector ({name})", component="cosine_distance")
    similarity = ops.sum(ops.mul(ops.l2_normalize(u), ops.l2_normalize(v)), axis=-1)
    return ops.sub(1.0, similarity)


def _seen_rows(labels, model: S2vModel, seen_classes) -> np.ndarray:
    labels = np.asarray(labels).reshape(-1)
    unknown = sorted(set(int(c) for c in labels) - set(int(c) for c in seen_classes))
    if unknown:
        raise ValidationError(f"Labels {unknown} are not seen classes")
    return model.class_rows(labels)


def s2v_loss(features, labels, model: S2vModel, attributes, seen_classes=None) -> Tensor:
    """Mean cosine distance between f_v(x) and g(a_y)."""
    seen_classes = model.class_ids if seen_classes is None else seen_classes
    rows = _seen_rows(labels, model, seen_classes)
    visual = embed_visual(features, model)
    if visual.ndim == 1:
        visual = ops.reshape(visual, (1, -1))
    semantic = select_rows(embed_semantic(attributes, model), rows)
    return ops.mean(cosine_distance(visual, semantic))


def cet_loss(features, labels, model: S2vModel, attributes, seen_classes, temperature: float) -> Tensor:
    """Cross-entropy of cos(f_v(x), g(a_j)) / temperature over seen classes j."""
    if temperature <= 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    seen_classes = sorted(int(c) for c in seen_classes)
    labels = np.asarray(labels).reshape(-1)
    _seen_rows(labels, model, seen_classes)
    columns = {class_id: column for column, class_id in enumerate(seen_classes)}
    targets = np.zeros((len(labels), len(seen_classes)))
    targets[np.arange(len(labels)), [columns[int(c)] for c in labels]] = 1.0

    visual = embed_visual(features, model)
    if visual.ndim == 1:
        visual = ops.reshape(visual, (1, -1))
    semantic = select_rows(embed_semantic(attributes, model), model.class_rows(seen_classes))
    scores = ops.scale(ops.matmul(visual, ops.transpose(semantic)), 1.0 / temperature)
    picked = ops.sum(ops.mul(ops.log_softmax(scores, axis=-1), targets), axis=-1)
    return ops.scale(ops.mean(picked), -1.0)
