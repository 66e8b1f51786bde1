# lab/trainer/tasks.py
import logging
from typing import Dict, Optional, Tuple

import attrs
import numpy as np

from amse.models import AmseModel, EmbeddingVariant
from autos2v.models import CellSpec, S2vModel, SemanticHead
from autos2v.operations import build_adjacency
from autos2v.search import cell_summary, discretize
from dataio.models import GzslDataset
from dvbe_lab.conf import settings
from dvbe_lab.exceptions import ContractError, DvbeError
from gate.services import classifier_accuracy, split_entropies
from numerics.rng import STREAM_INIT, STREAM_SHUFFLE, make_rng

from .models import DvbeModels, EpochRecord, TrainConfig, TrainLog
from .objective import overall_loss
from .optim import SGD

logger = logging.getLogger(__name__)

STAGE1, STAGE2 = 1, 2


def init_models(
    dataset: GzslDataset,
    seed: int,
    variant=None,
    head=SemanticHead.SEARCHED,
    reduced_dim: Optional[int] = None,
    use_normalization: Optional[bool] = None,
    embed_dim: Optional[int] = None,
    n_nodes: Optional[int] = None,
    top_k: Optional[int] = None,
) -> DvbeModels:
    """Fresh MSRA-initialized branches sized for `dataset`; unset options come from settings."""
    amse_settings, s2v_settings = settings.AMSE, settings.AUTOS2V
    channels = dataset.feature_dims[2]
    class_ids = dataset.class_ids
    # one stream per branch: resizing one branch never changes the other's initial weights
    amse = AmseModel.initialize(
        make_rng(seed, STREAM_INIT, 1),
        channels=channels,
        reduced_dim=reduced_dim or min(amse_settings["reduced_dim"], channels),
        seen_classes=dataset.sorted_seen,
        variant=EmbeddingVariant(variant or amse_settings["variant"]),
        use_normalization=amse_settings["use_normalization"] if use_normalization is None else use_normalization,
        signed_sqrt_eps=amse_settings["signed_sqrt_eps"],
    )
    top_k = min(top_k or s2v_settings["adjacency_top_k"], len(class_ids) - 1)
    s2v = S2vModel.initialize(
        make_rng(seed, STREAM_INIT, 2),
        channels=channels,
        attr_dim=dataset.attr_dim,
        embed_dim=embed_dim or s2v_settings["embed_dim"],
        class_ids=class_ids,
        adjacency=build_adjacency(dataset.attribute_matrix(class_ids), top_k),
        n_nodes=n_nodes or s2v_settings["n_nodes"],
        head=head,
    )
    logger.debug(f"Initialized models seed={seed} variant={amse.variant.value} head={SemanticHead(head).value}")
    return DvbeModels(amse=amse, s2v=s2v)


def _run_pass(dataset: GzslDataset, split: str, models: DvbeModels, optimizer: SGD, config: TrainConfig, rng) -> Dict[str, float]:
    """One epoch of minibatch updates on `split`; returns sample-weighted mean losses."""
    attributes = dataset.attribute_matrix(models.s2v.class_ids)
    totals = {"l_s2v": 0.0, "l_ams": 0.0, "l_cet": 0.0, "l_all": 0.0}
    count = 0
    for batch in dataset.batches(split, config.batch_size, rng):
        optimizer.zero_grad()
        losses = overall_loss(batch.features, batch.labels, models, attributes, dataset.sorted_seen, config)
        losses.total.backward()
        optimizer.step()
        for name in totals:
            totals[name] += getattr(losses, name) * len(batch)
        count += len(batch)
    return {name: value / count for name, value in totals.items()}


def _record(epoch: int, losses: Dict[str, float], dataset: GzslDataset, models: DvbeModels) -> EpochRecord:
    split = "val_seen" if dataset.val_seen else "train_seen"
    return EpochRecord(
        epoch=epoch,
        val_acc=classifier_accuracy(dataset, models.amse, split),
        val_entropy=float(np.mean(split_entropies(dataset, models.amse, split))),
        **losses,
    )


def train_stage1(dataset: GzslDataset, models: DvbeModels, config: TrainConfig) -> TrainLog:
    """
    Alternating search: each epoch runs a weight pass on train_seen, then an
    architecture pass on val_seen that only moves the α scores.
    """
    if not dataset.val_seen:
        raise ContractError("Stage 1 needs a non-empty val_seen split for architecture updates")
    log = TrainLog(stage="search")
    weights = SGD(models.weight_parameters(), config.lr, config.momentum)
    arch = SGD(models.arch_parameters(), config.lr, config.momentum)
    rng = make_rng(config.seed, STREAM_SHUFFLE, STAGE1)
    try:
        for epoch in range(1, config.epochs_stage1 + 1):
            losses = _run_pass(dataset, "train_seen", models, weights, config, rng)
            weights.zero_grad()
            if arch.params:
                _run_pass(dataset, "val_seen", models, arch, config, rng)
                arch.zero_grad()
            record = _record(epoch, losses, dataset, models)
            log.append(record)
            logger.info(
                f"[search] epoch {epoch}/{config.epochs_stage1}: l_all={record.l_all:.4f} "
                f"l_s2v={record.l_s2v:.4f} l_ams={record.l_ams:.4f} l_cet={record.l_cet:.4f} "
                f"val_acc={record.val_acc:.2f} val_entropy={record.val_entropy:.4f}"
            )
    except DvbeError as e:
        logger.error(f"Stage 1 failed at epoch {len(log) + 1}: {e}")
        raise
    return log


def train_stage2(dataset: GzslDataset, models: DvbeModels, config: TrainConfig, epochs: Optional[int] = None) -> TrainLog:
    """Fine-tune every weight with the architecture fixed."""
    if models.s2v.searching:
        raise ContractError("Stage 2 needs a discretized architecture; call discretize() first")
    epochs = config.epochs_stage2 if epochs is None else epochs
    log = TrainLog(stage="train")
    optimizer = SGD(models.weight_parameters(), config.lr, config.momentum)
    rng = make_rng(config.seed, STREAM_SHUFFLE, STAGE2)
    try:
        for epoch in range(1, epochs + 1):
            losses = _run_pass(dataset, "train_seen", models, optimizer, config, rng)
            record = _record(epoch, losses, dataset, models)
            log.append(record)
            logger.info(
                f"[train] epoch {epoch}/{epochs}: l_all={record.l_all:.4f} "
                f"val_acc={record.val_acc:.2f} val_entropy={record.val_entropy:.4f}"
            )
    except DvbeError as e:
        logger.error(f"Stage 2 failed at epoch {len(log) + 1}: {e}")
        raise
    return log


def fix_architecture(models: DvbeModels) -> Tuple[DvbeModels, CellSpec]:
    """Discretize the searched α and swap it into the semantic branch."""
    cell = discretize(models.s2v.arch)
    logger.info(f"Searched cell: {cell_summary(cell).describe()}")
    return attrs.evolve(models, s2v=models.s2v.with_cell(cell)), cell


def run_pipeline(dataset: GzslDataset, models: DvbeModels, config: TrainConfig):
    """
    Full two-stage training. A hand-designed semantic head has nothing to
    search, so it trains for both stages' epochs with the weights alone.
    Returns (models, cell or None, search log or None, train log).
    """
    if models.s2v.hand_designed:
        log = train_stage2(dataset, models, config, epochs=config.epochs_stage1 + config.epochs_stage2)
        return models, None, None, log
    search_log = train_stage1(dataset, models, config)
    models, cell = fix_architecture(models)
    return models, cell, search_log, train_stage2(dataset, models, config)
