"""
Entropy-gated inference: a sample whose seen-class prediction entropy is at
most τ keeps the AMSE argmax; otherwise it goes to nearest-neighbour search
over the unseen classes.
"""
import logging
from typing import List, Sequence, Tuple

import attrs
import numpy as np
import pandas as pd
from scipy import stats

from amse.embedding import embed
from amse.losses import classify
from amse.models import AmseModel
from autos2v.inference import predict_generalized, predict_unseen
from autos2v.models import S2vModel
from dataio.models import Domain, GzslDataset
from dvbe_lab.exceptions import ValidationError
from metrics.models import MetricsReport
from metrics.services import domain_recall, mca
from numerics import Tensor, as_tensor, no_grad

from .models import GateConfig, Prediction, RoutedBatch

logger = logging.getLogger(__name__)

SUM_TOLERANCE = 1e-9
EVAL_CHUNK = 256

HISTOGRAM_COLUMNS = ("bin_left", "bin_right", "seen", "unseen")


def entropy(probs):
    """Natural-log entropy of one distribution (or of each row)."""
    probs = np.asarray(probs.data if isinstance(probs, Tensor) else probs, dtype=np.float64)
    if probs.size == 0 or np.any(probs < 0) or not np.all(np.isfinite(probs)):
        raise ValidationError("entropy needs a non-empty, non-negative distribution")
    if np.any(np.abs(probs.sum(axis=-1) - 1.0) > SUM_TOLERANCE):
        raise ValidationError("entropy needs probabilities summing to 1")
    values = stats.entropy(probs, axis=-1)
    return float(values) if np.ndim(values) == 0 else values


def calibrate_tau(seen_val_entropies: Sequence[float], percentile: float) -> float:
    values = np.asarray(seen_val_entropies, dtype=np.float64).reshape(-1)
    if values.size == 0:
        raise ValidationError("Cannot calibrate τ from an empty entropy list")
    if not 0 <= percentile <= 100:
        raise ValidationError(f"percentile must be in [0, 100], got {percentile}")
    return float(np.percentile(values, percentile))


def seen_probabilities(features, amse_model: AmseModel) -> np.ndarray:
    """Softmax over seen classes for a batch of feature maps, computed in chunks."""
    features = as_tensor(features).data
    single = features.ndim == 3
    features = features[None] if single else features
    chunks = []
    with no_grad():
        for start in range(0, len(features), EVAL_CHUNK):
            chunk = Tensor(features[start:start + EVAL_CHUNK])
            chunks.append(classify(embed(chunk, amse_model), amse_model).data)
    probs = np.concatenate(chunks)
    return probs[0] if single else probs


@attrs.frozen
class BranchScores:
    """Everything the gate needs for one split, independent of τ."""
    labels: np.ndarray
    entropies: np.ndarray
    seen_predictions: np.ndarray
    unseen_predictions: np.ndarray

    def route(self, tau: float) -> RoutedBatch:
        keep_seen = self.entropies <= tau
        return RoutedBatch(
            class_ids=np.where(keep_seen, self.seen_predictions, self.unseen_predictions),
            decisions=tuple(Domain.SEEN if k else Domain.UNSEEN for k in keep_seen),
            entropies=self.entropies,
        )


def branch_scores(features, labels, amse_model: AmseModel, s2v_model: S2vModel, attributes, unseen_classes) -> BranchScores:
    probs = seen_probabilities(features, amse_model)
    unseen = np.concatenate([
        np.atleast_1d(predict_unseen(Tensor(features[start:start + EVAL_CHUNK]), s2v_model, attributes, unseen_classes))
        for start in range(0, len(features), EVAL_CHUNK)
    ])
    return BranchScores(
        labels=np.asarray(labels),
        entropies=entropy(probs).reshape(-1),
        seen_predictions=np.asarray(amse_model.seen_classes)[np.argmax(probs, axis=1)],
        unseen_predictions=unseen,
    )


def gated_predict(x, amse_model: AmseModel, s2v_model: S2vModel, attributes, unseen_classes, config: GateConfig) -> Prediction:
    """Route one W×H×C feature map through the entropy gate."""
    probs = seen_probabilities(x, amse_model)
    h = entropy(probs)
    if h <= config.tau:
        return Prediction(int(amse_model.seen_classes[int(np.argmax(probs))]), Domain.SEEN, h, probs)
    return Prediction(predict_unseen(x, s2v_model, attributes, unseen_classes), Domain.UNSEEN, h, probs)


def _attributes(dataset: GzslDataset, s2v_model: S2vModel) -> np.ndarray:
    return dataset.attribute_matrix(s2v_model.class_ids)


def _test_scores(dataset: GzslDataset, models) -> Tuple[BranchScores, BranchScores]:
    attributes = _attributes(dataset, models.s2v)
    seen, unseen = dataset.stack("test_seen"), dataset.stack("test_unseen")
    return (
        branch_scores(seen.features, seen.labels, models.amse, models.s2v, attributes, dataset.sorted_unseen),
        branch_scores(unseen.features, unseen.labels, models.amse, models.s2v, attributes, dataset.sorted_unseen),
    )


def _report(dataset: GzslDataset, seen: BranchScores, unseen: BranchScores, tau: float) -> MetricsReport:
    seen_routed, unseen_routed = seen.route(tau), unseen.route(tau)
    r_s, r_u = domain_recall(
        seen_routed.decisions + unseen_routed.decisions,
        (Domain.SEEN,) * len(seen.labels) + (Domain.UNSEEN,) * len(unseen.labels),
    )
    return MetricsReport.build(
        mca_s=mca(seen_routed.class_ids, seen.labels, dataset.seen_classes),
        mca_u=mca(unseen_routed.class_ids, unseen.labels, dataset.unseen_classes),
        r_s=r_s,
        r_u=r_u,
    )


def evaluate(dataset: GzslDataset, models, config: GateConfig) -> MetricsReport:
    """Gated evaluation on test_seen (MCA_s) and test_unseen (MCA_u)."""
    seen, unseen = _test_scores(dataset, models)
    report = _report(dataset, seen, unseen, config.tau)
    logger.info(f"Gated evaluation at tau={config.tau:.4f}: {report.describe()}")
    return report


def tau_sweep(dataset: GzslDataset, models, tau_grid: Sequence[float]) -> List[Tuple[float, MetricsReport]]:
    grid = [float(t) for t in tau_grid]
    if not grid:
        raise ValidationError("Empty τ grid")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValidationError("τ grid must be ascending")
    seen, unseen = _test_scores(dataset, models)
    rows = [(tau, _report(dataset, seen, unseen, tau)) for tau in grid]

    mca_s = [report.mca_s for _, report in rows]
    mca_u = [report.mca_u for _, report in rows]
    if any(b < a for a, b in zip(mca_s, mca_s[1:])) or any(b > a for a, b in zip(mca_u, mca_u[1:])):
        logger.warning("τ sweep: MCA_s does not rise or MCA_u does not fall monotonically along the grid")
    best_tau, best = max(rows, key=lambda row: row[1].h)
    logger.info(f"τ sweep over {len(grid)} values: best H={best.h:.2f} at tau={best_tau:.4f}")
    return rows


def evaluate_generalized(dataset: GzslDataset, s2v_model: S2vModel) -> MetricsReport:
    """Nearest neighbour over all classes; a sample counts as routed seen when its prediction is a seen class."""
    attributes = _attributes(dataset, s2v_model)
    predictions, labels, truths = [], [], []
    for name, domain in (("test_seen", Domain.SEEN), ("test_unseen", Domain.UNSEEN)):
        batch = dataset.stack(name)
        for start in range(0, len(batch), EVAL_CHUNK):
            chunk = Tensor(batch.features[start:start + EVAL_CHUNK])
            predictions.append(np.atleast_1d(predict_generalized(chunk, s2v_model, attributes)))
        labels.append(batch.labels)
        truths.extend([domain] * len(batch))
    predictions, labels = np.concatenate(predictions), np.concatenate(labels)
    decisions = [Domain.SEEN if int(p) in dataset.seen_classes else Domain.UNSEEN for p in predictions]
    n_seen = len(dataset.test_seen)
    r_s, r_u = domain_recall(decisions, truths)
    report = MetricsReport.build(
        mca_s=mca(predictions[:n_seen], labels[:n_seen], dataset.seen_classes),
        mca_u=mca(predictions[n_seen:], labels[n_seen:], dataset.unseen_classes),
        r_s=r_s,
        r_u=r_u,
    )
    logger.info(f"Generalized nearest-neighbour evaluation: {report.describe()}")
    return report


def classifier_accuracy(dataset: GzslDataset, amse_model: AmseModel, split: str = "test_seen") -> float:
    """Ungated AMSE MCA over the seen classes that have samples in `split`."""
    batch = dataset.stack(split)
    probs = seen_probabilities(batch.features, amse_model)
    predictions = np.asarray(amse_model.seen_classes)[np.argmax(probs, axis=1)]
    present = set(dataset.seen_classes) & set(batch.labels.tolist())
    missing = set(dataset.seen_classes) - present
    if missing:
        logger.debug(f"{split}: no samples for seen classes {sorted(missing)}; MCA over the other {len(present)}")
    return mca(predictions, batch.labels, present)


def split_entropies(dataset: GzslDataset, amse_model: AmseModel, split: str) -> np.ndarray:
    return entropy(seen_probabilities(dataset.stack(split).features, amse_model)).reshape(-1)


def calibrate_from_validation(dataset: GzslDataset, amse_model: AmseModel, percentile: float) -> float:
    tau = calibrate_tau(split_entropies(dataset, amse_model, "val_seen"), percentile)
    logger.info(f"Calibrated tau={tau:.4f} at the {percentile:g}th percentile of seen-validation entropies")
    return tau


def entropy_statistics(dataset: GzslDataset, models, bins: int) -> pd.DataFrame:
    """Histogram of seen- and unseen-domain test entropies over [0, ln |Y_s|]."""
    if bins < 1:
        raise ValidationError(f"bins must be positive, got {bins}")
    seen = split_entropies(dataset, models.amse, "test_seen")
    unseen = split_entropies(dataset, models.amse, "test_unseen")
    top = max(np.log(len(models.amse.seen_classes)), np.finfo(np.float64).eps)
    edges = np.linspace(0.0, top, bins + 1)
    seen_counts, _ = np.histogram(np.clip(seen, edges[0], edges[-1]), bins=edges)
    unseen_counts, _ = np.histogram(np.clip(unseen, edges[0], edges[-1]), bins=edges)
    logger.info(f"Mean entropy: seen {seen.mean():.4f}, unseen {unseen.mean():.4f}")
    return pd.DataFrame({
        "bin_left": edges[:-1],
        "bin_right": edges[1:],
        "seen": seen_counts,
        "unseen": unseen_counts,
    }, columns=list(HISTOGRAM_COLUMNS))
