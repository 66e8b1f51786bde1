"""Mean class accuracy, harmonic mean and domain-detection recall, in percent."""
from typing import Iterable, Sequence, Tuple

import numpy as np

from dataio.models import Domain
from dvbe_lab.exceptions import ValidationError


def mca(predictions: Sequence[int], labels: Sequence[int], class_set: Iterable[int]) -> float:
    """Unweighted mean over class_set of per-class top-1 accuracy."""
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if predictions.shape != labels.shape:
        raise ValidationError(f"{predictions.size} predictions for {labels.size} labels")
    class_set = sorted(int(c) for c in class_set)
    if not class_set:
        raise ValidationError("mca over an empty class set")
    accuracies = []
    for class_id in class_set:
        mask = labels == class_id
        if not mask.any():
            raise ValidationError(f"Class {class_id} has no evaluation samples")
        accuracies.append(np.mean(predictions[mask] == class_id))
    return 100.0 * float(np.mean(accuracies))


def harmonic(a: float, b: float) -> float:
    a, b = float(a), float(b)
    if a < 0 or b < 0:
        raise ValidationError(f"harmonic mean of negative values ({a}, {b})")
    return 0.0 if a + b == 0 else 2.0 * a * b / (a + b)


def domain_recall(decisions: Sequence, true_domains: Sequence) -> Tuple[float, float]:
    """(r_s, r_u): share of each true domain routed to itself."""
    decisions = np.array([Domain(d).value for d in decisions])
    true_domains = np.array([Domain(d).value for d in true_domains])
    if decisions.shape != true_domains.shape:
        raise ValidationError(f"{decisions.size} routing decisions for {true_domains.size} samples")
    recalls = []
    for domain in (Domain.SEEN, Domain.UNSEEN):
        mask = true_domains == domain.value
        if not mask.any():
            raise ValidationError(f"No {domain.value}-domain samples to measure recall on")
        recalls.append(100.0 * float(np.mean(decisions[mask] == domain.value)))
    return recalls[0], recalls[1]
