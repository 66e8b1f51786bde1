"""Finite-difference checks of every trainable component on a small synthetic problem."""
import logging
from typing import Callable, Dict, List, Sequence, Tuple

import attrs
import numpy as np

from amse.embedding import embed
from amse.losses import ams_loss
from autos2v.embedding import embed_semantic
from autos2v.losses import cet_loss, s2v_loss
from dataio.models import SynthConfig
from dataio.synth import synth_gzsl
from numerics import GradCheckReport, Tensor, check_parameters, ops
from numerics.rng import STREAM_GRADCHECK, make_rng

from .models import DvbeModels, TrainConfig
from .objective import overall_loss
from .tasks import init_models

logger = logging.getLogger(__name__)

PROBLEM = SynthConfig(n_seen=3, n_unseen=2, attr_dim=4, feat_dims=(2, 2, 5), samples_per_class=4)
BATCH = 3
# a fixed margin keeps λ constant under perturbation
CHECK_CONFIG = TrainConfig(gamma=0.5, margin_mode="fixed")


@attrs.frozen
class CheckResult:
    component: str
    seed: int
    report: GradCheckReport

    def passed(self, tolerance: float) -> bool:
        return self.report.passed(tolerance)


def _cases(seed: int) -> Dict[str, Tuple[Callable[[], Tensor], Dict[str, Tensor]]]:
    dataset = synth_gzsl(attrs.evolve(PROBLEM, seed=seed))
    models: DvbeModels = init_models(dataset, seed, reduced_dim=3, embed_dim=4, n_nodes=2, top_k=2, use_normalization=False)
    amse, s2v = models.amse, models.s2v
    batch = next(dataset.batches("train_seen", BATCH, make_rng(seed, STREAM_GRADCHECK)))
    features = Tensor(batch.features)
    attributes = dataset.attribute_matrix(s2v.class_ids)
    seen = dataset.sorted_seen
    rng = make_rng(seed, STREAM_GRADCHECK, 1)
    embed_direction = rng.normal(size=(BATCH, amse.feature_width))
    semantic_direction = rng.normal(size=(len(s2v.class_ids), s2v.embed_dim))
    s2v_params = {**s2v.parameters(), **s2v.arch_parameters()}

    return {
        "embed": (lambda: ops.sum(ops.mul(embed(features, amse), embed_direction)), amse.parameters()),
        "ams_loss": (lambda: ams_loss(embed(features, amse), batch.labels, amse, CHECK_CONFIG.margin), amse.parameters()),
        "embed_semantic": (lambda: ops.sum(ops.mul(embed_semantic(attributes, s2v), semantic_direction)), s2v_params),
        "s2v_loss": (lambda: s2v_loss(features, batch.labels, s2v, attributes, seen), s2v_params),
        "cet_loss": (
            lambda: cet_loss(features, batch.labels, s2v, attributes, seen, CHECK_CONFIG.cet_temperature), s2v_params
        ),
        "overall_loss": (
            lambda: overall_loss(features, batch.labels, models, attributes, seen, CHECK_CONFIG).total,
            {**models.weight_parameters(), **models.arch_parameters()},
        ),
    }


def gradient_suite(seeds: Sequence[int], step: float) -> List[CheckResult]:
    results = []
    for seed in seeds:
        for component, (fn, params) in _cases(seed).items():
            report = check_parameters(fn, params, step)
            logger.debug(f"{component} seed={seed}: max error {report.max_error:.3e} at {report.worst()}")
            results.append(CheckResult(component, seed, report))
    return results


def summarize(results: Sequence[CheckResult], tolerance: float) -> Dict[str, float]:
    """Worst error per component; logs each failing (component, seed)."""
    worst: Dict[str, float] = {}
    for result in results:
        worst[result.component] = max(worst.get(result.component, 0.0), result.report.max_error)
        if not result.passed(tolerance):
            logger.error(
                f"Gradient check failed: {result.component} seed={result.seed} "
                f"error {result.report.max_error:.3e} at {result.report.worst()}"
            )
    return worst


def all_passed(results: Sequence[CheckResult], tolerance: float) -> bool:
    return bool(results) and all(np.isfinite(r.report.max_error) and r.passed(tolerance) for r in results)
