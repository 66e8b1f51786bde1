"""
Deterministic synthetic GZSL benchmark.

Class attributes are uniform in [0, 1]^A. A single random linear map M with
orthonormal columns (orthonormal rows when C < A) sends attributes to class
feature means, shared by seen and unseen classes, so cosine geometry among
attribute vectors carries over to the means. Each sample tiles its class mean
over the W×H grid and adds per-position Gaussian noise.
"""
import logging
from typing import Tuple

import numpy as np

from numerics.rng import STREAM_SYNTH, make_rng

from .models import Domain, GzslDataset, Sample, SemanticLabel, SynthConfig, held_out_count

logger = logging.getLogger(__name__)


def _semantic_map(rng: np.random.Generator, channels: int, attr_dim: int) -> np.ndarray:
    """C×A map with orthonormal columns (or rows when C < A)."""
    if channels >= attr_dim:
        q, r = np.linalg.qr(rng.normal(size=(channels, attr_dim)))
        return q * np.sign(np.diag(r))
    q, r = np.linalg.qr(rng.normal(size=(attr_dim, channels)))
    return (q * np.sign(np.diag(r))).T


def _draw_semantics(config: SynthConfig, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    n_classes = config.n_seen + config.n_unseen
    attributes = rng.uniform(0.0, 1.0, size=(n_classes, config.attr_dim))
    channels = config.feat_dims[2]
    means = config.mean_scale * attributes @ _semantic_map(rng, channels, config.attr_dim).T
    return attributes, means


def class_means(config: SynthConfig) -> np.ndarray:
    """Noise-free class means (K×C), in class-id order."""
    _, means = _draw_semantics(config, make_rng(config.seed, STREAM_SYNTH))
    return means


def synth_gzsl(config: SynthConfig) -> GzslDataset:
    rng = make_rng(config.seed, STREAM_SYNTH)
    attributes, means = _draw_semantics(config, rng)
    width, height, channels = config.feat_dims
    seen_ids = list(range(config.n_seen))
    unseen_ids = list(range(config.n_seen, config.n_seen + config.n_unseen))

    def draw(class_id: int, count: int) -> np.ndarray:
        noise = rng.normal(0.0, 1.0, size=(count, width, height, channels))
        return means[class_id] + config.noise_scale * noise

    train, val, test_seen, test_unseen = [], [], [], []
    for class_id in seen_ids:
        features = draw(class_id, config.samples_per_class)
        n_test = held_out_count(config.samples_per_class, config.test_fraction)
        n_trainval = config.samples_per_class - n_test
        n_val = held_out_count(n_trainval, config.val_fraction)
        samples = [Sample(f, class_id, Domain.SEEN) for f in features]
        train.extend(samples[:n_trainval - n_val])
        val.extend(samples[n_trainval - n_val:n_trainval])
        test_seen.extend(samples[n_trainval:])
    for class_id in unseen_ids:
        features = draw(class_id, config.samples_per_class)
        test_unseen.extend(Sample(f, class_id, Domain.UNSEEN) for f in features)

    dataset = GzslDataset(
        train_seen=train,
        val_seen=val,
        test_seen=test_seen,
        test_unseen=test_unseen,
        semantics=[SemanticLabel(c, attributes[c]) for c in seen_ids + unseen_ids],
        seen_classes=seen_ids,
        unseen_classes=unseen_ids,
        val_fraction=config.val_fraction,
    )
    logger.info(
        f"Synthesized dataset seed={config.seed}: {config.n_seen}+{config.n_unseen} classes, "
        f"A={config.attr_dim}, dims={config.feat_dims}, noise={config.noise_scale}"
    )
    return dataset
