"""
Ablation tables over the two-branch pipeline.

Each row names a (variant, margin, head) configuration; configurations shared
between tables are trained once. Every table row is scored on the test splits,
gated rows at a τ calibrated on seen-validation entropies.
"""
import logging
from typing import Dict, List, Optional, Tuple

import attrs

from amse.models import EmbeddingVariant, MarginMode
from autos2v.models import SemanticHead
from dataio.models import GzslDataset
from dvbe_lab.conf import settings
from gate.models import GateConfig
from gate.services import calibrate_from_validation, evaluate, evaluate_generalized
from metrics.models import MetricsReport

from .models import DvbeModels, TrainConfig
from .tasks import init_models, run_pipeline

logger = logging.getLogger(__name__)

COMPONENTS = "components"
MARGINS = "margins"
INTERACTION = "interaction"
HEADS = "heads"


@attrs.frozen
class Setup:
    variant: EmbeddingVariant = attrs.field(converter=EmbeddingVariant)
    margin_mode: MarginMode = attrs.field(converter=MarginMode)
    head: SemanticHead = attrs.field(converter=SemanticHead)


@attrs.frozen
class AblationRow:
    table: str
    name: str
    report: MetricsReport
    tau: Optional[float]
    final_loss: float


# (table, row name, setup, gated); an ungated row scores the semantic branch alone
ABLATION_PLAN: Tuple[Tuple[str, str, Setup, bool], ...] = (
    (COMPONENTS, "BaseS2V", Setup("first_order", "standard", "hand_designed"), False),
    (COMPONENTS, "+f_d", Setup("first_order", "standard", "hand_designed"), True),
    (COMPONENTS, "+CSE", Setup("cross_attentive", "standard", "hand_designed"), True),
    (COMPONENTS, "+L_ams", Setup("cross_attentive", "adaptive", "hand_designed"), True),
    (MARGINS, "standard", Setup("cross_attentive", "standard", "hand_designed"), True),
    (MARGINS, "fixed", Setup("cross_attentive", "fixed", "hand_designed"), True),
    (MARGINS, "adaptive", Setup("cross_attentive", "adaptive", "hand_designed"), True),
    (INTERACTION, "first_order", Setup("first_order", "standard", "hand_designed"), True),
    (INTERACTION, "bilinear", Setup("bilinear", "standard", "hand_designed"), True),
    (INTERACTION, "attentive", Setup("attentive", "standard", "hand_designed"), True),
    (INTERACTION, "cross_attentive", Setup("cross_attentive", "standard", "hand_designed"), True),
    (HEADS, "hand_designed", Setup("cross_attentive", "adaptive", "hand_designed"), True),
    (HEADS, "searched", Setup("cross_attentive", "adaptive", "searched"), True),
)


def _train(dataset: GzslDataset, setup: Setup, config: TrainConfig) -> Tuple[DvbeModels, float]:
    models = init_models(dataset, config.seed, variant=setup.variant, head=setup.head)
    models, _, _, log = run_pipeline(dataset, models, attrs.evolve(config, margin_mode=setup.margin_mode))
    final_loss = log.records[-1].l_all if len(log) else float("nan")
    return models, final_loss


def run_ablation(dataset: GzslDataset, config: TrainConfig, percentile: Optional[float] = None) -> List[AblationRow]:
    percentile = settings.GATE["calibration_percentile"] if percentile is None else percentile
    trained: Dict[Setup, Tuple[DvbeModels, float, float]] = {}
    rows = []
    for table, name, setup, gated in ABLATION_PLAN:
        if setup not in trained:
            logger.info(
                f"Ablation: training variant={setup.variant.value} margin={setup.margin_mode.value} head={setup.head.value}"
            )
            models, final_loss = _train(dataset, setup, config)
            tau = calibrate_from_validation(dataset, models.amse, percentile)
            trained[setup] = (models, final_loss, tau)
        models, final_loss, tau = trained[setup]
        if gated:
            report = evaluate(dataset, models, GateConfig(tau=tau, calibration_percentile=percentile))
        else:
            report, tau = evaluate_generalized(dataset, models.s2v), None
        logger.info(f"[{table}] {name}: {report.describe()}")
        rows.append(AblationRow(table=table, name=name, report=report, tau=tau, final_loss=final_loss))
    logger.info(f"Ablation finished: {len(rows)} rows from {len(trained)} trained configurations")
    return rows


def table(rows: List[AblationRow], name: str) -> Dict[str, MetricsReport]:
    return {row.name: row.report for row in rows if row.table == name}
