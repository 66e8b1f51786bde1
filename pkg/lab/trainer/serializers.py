"""
Checkpoints and training logs.

Checkpoint layout (little-endian): uint32 entry count, then for each entry in
name order: uint32 name length, UTF-8 name, uint32 rank, rank × uint64 dims,
float64 payload in C order. Model metadata lives in `meta.*` entries.
"""
import logging
from pathlib import Path
from typing import Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from amse.models import AmseModel, EmbeddingVariant
from autos2v.models import ArchParams, CellSpec, OperationKind, S2vModel, dag_edges, edge_key
from dvbe_lab.exceptions import ValidationError
from metrics.models import REPORT_FIELDS, MetricsReport
from numerics import Tensor

from .ablation import AblationRow
from .models import TRAINLOG_COLUMNS, DvbeModels, EpochRecord, TrainLog

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

HEAD_SEARCHED, HEAD_CELL, HEAD_HAND_DESIGNED = 0.0, 1.0, 2.0
VARIANTS = list(EmbeddingVariant)


def write_entries(entries: Dict[str, np.ndarray], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [np.array([len(entries)], dtype="<u4").tobytes()]
    for name in sorted(entries):
        array = np.ascontiguousarray(entries[name], dtype="<f8")
        encoded = name.encode("utf-8")
        chunks.append(np.array([len(encoded)], dtype="<u4").tobytes())
        chunks.append(encoded)
        chunks.append(np.array([array.ndim], dtype="<u4").tobytes())
        chunks.append(np.array(array.shape, dtype="<u8").tobytes())
        chunks.append(array.tobytes())
    path.write_bytes(b"".join(chunks))
    return path


def read_entries(path: PathLike) -> Dict[str, np.ndarray]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    blob = path.read_bytes()
    offset = 0

    def take(dtype, count):
        nonlocal offset
        size = np.dtype(dtype).itemsize * count
        if offset + size > len(blob):
            raise ValidationError(f"{path}: truncated checkpoint at byte {offset}")
        values = np.frombuffer(blob, dtype=dtype, count=count, offset=offset)
        offset += size
        return values

    entries = {}
    for _ in range(int(take("<u4", 1)[0])):
        length = int(take("<u4", 1)[0])
        name = take("u1", length).tobytes().decode("utf-8")
        rank = int(take("<u4", 1)[0])
        shape = tuple(int(d) for d in take("<u8", rank))
        entries[name] = take("<f8", int(np.prod(shape, dtype=np.int64))).reshape(shape).astype(np.float64)
    if offset != len(blob):
        raise ValidationError(f"{path}: {len(blob) - offset} trailing bytes after the last entry")
    return entries


def model_entries(models: DvbeModels) -> Dict[str, np.ndarray]:
    amse, s2v = models.amse, models.s2v
    entries = {f"amse.{name}": t.data for name, t in amse.parameters().items()}
    entries.update((f"s2v.{name}", t.data) for name, t in s2v.parameters().items())
    entries["s2v.adjacency"] = s2v.adjacency
    if isinstance(s2v.arch, ArchParams):
        entries.update((f"s2v.{name}", t.data) for name, t in s2v.arch.parameters().items())
        head = HEAD_SEARCHED
    elif isinstance(s2v.arch, CellSpec):
        entries.update((f"s2v.cell.{edge_key(edge)}", np.array(kind.index, dtype=np.float64)) for edge, kind in s2v.arch.edges())
        head = HEAD_CELL
    else:
        head = HEAD_HAND_DESIGNED
    entries.update({
        "meta.seen_classes": np.asarray(amse.seen_classes, dtype=np.float64),
        "meta.class_ids": np.asarray(s2v.class_ids, dtype=np.float64),
        "meta.variant": np.array(VARIANTS.index(amse.variant), dtype=np.float64),
        "meta.use_normalization": np.array(float(amse.use_normalization)),
        "meta.signed_sqrt_eps": np.array(amse.signed_sqrt_eps),
        "meta.n_nodes": np.array(float(s2v.n_nodes)),
        "meta.head": np.array(head),
    })
    return entries


def save_checkpoint(models: DvbeModels, path: PathLike) -> Path:
    path = write_entries(model_entries(models), path)
    logger.info(f"Wrote checkpoint to {path}")
    return path


def _ids(values: np.ndarray) -> tuple:
    return tuple(int(round(v)) for v in values.reshape(-1))


def _item(entries: Dict[str, np.ndarray], name: str) -> float:
    value = entries[name]
    if value.size != 1:
        raise ValidationError(f"checkpoint entry {name} holds {value.size} values, expected one")
    return value.item()


def load_checkpoint(path: PathLike) -> DvbeModels:
    entries = read_entries(path)
    try:
        def tensors(prefix):
            return {
                name[len(prefix):]: Tensor(value, requires_grad=True, name=name[len(prefix):])
                for name, value in entries.items() if name.startswith(prefix)
            }

        amse = AmseModel(
            **tensors("amse."),
            seen_classes=_ids(entries["meta.seen_classes"]),
            variant=VARIANTS[int(_item(entries, "meta.variant"))],
            use_normalization=bool(_item(entries, "meta.use_normalization")),
            signed_sqrt_eps=_item(entries, "meta.signed_sqrt_eps"),
        )
        n_nodes = int(_item(entries, "meta.n_nodes"))
        head = _item(entries, "meta.head")
        s2v_tensors = {
            name: t for name, t in tensors("s2v.").items()
            if name != "adjacency" and not name.startswith(("alpha.", "cell."))
        }
        if head == HEAD_SEARCHED:
            arch = ArchParams(n_nodes, {
                edge: Tensor(entries[f"s2v.alpha.{edge_key(edge)}"], requires_grad=True, name=f"alpha.{edge_key(edge)}")
                for edge in dag_edges(n_nodes)
            })
        elif head == HEAD_CELL:
            arch = CellSpec(n_nodes, {
                edge: OperationKind.from_index(int(_item(entries, f"s2v.cell.{edge_key(edge)}"))) for edge in dag_edges(n_nodes)
            })
        else:
            arch = None
        s2v = S2vModel(
            fv_weight=s2v_tensors.pop("fv_weight"),
            fv_bias=s2v_tensors.pop("fv_bias"),
            projection=s2v_tensors.pop("projection"),
            head_weights=s2v_tensors,
            adjacency=entries["s2v.adjacency"],
            class_ids=_ids(entries["meta.class_ids"]),
            n_nodes=n_nodes,
            arch=arch,
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: checkpoint entry {exc} missing")
    logger.info(f"Loaded checkpoint from {path} ({len(entries)} entries)")
    return DvbeModels(amse=amse, s2v=s2v)


def write_trainlog(log: TrainLog, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame.from_records(
        [{name: getattr(record, name) for name in TRAINLOG_COLUMNS} for record in log.records],
        columns=list(TRAINLOG_COLUMNS),
    )
    frame.to_csv(path, index=False, lineterminator="\n")
    logger.info(f"Wrote {len(log)} {log.stage} epoch record(s) to {path}")
    return path


def read_trainlog(path: PathLike, stage: str = "") -> TrainLog:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    if tuple(frame.columns) != TRAINLOG_COLUMNS:
        raise ValidationError(f"{path}: expected columns {TRAINLOG_COLUMNS}")
    log = TrainLog(stage=stage)
    for record in frame.to_dict("records"):
        log.append(EpochRecord(epoch=int(record.pop("epoch")), **{k: float(v) for k, v in record.items()}))
    return log


ABLATION_COLUMNS = ("table", "row", "tau", "final_loss") + REPORT_FIELDS


def write_ablation(rows: Sequence[AblationRow], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame.from_records(
        [
            {"table": row.table, "row": row.name, "tau": row.tau, "final_loss": row.final_loss, **row.report.as_dict()}
            for row in rows
        ],
        columns=list(ABLATION_COLUMNS),
    )
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    logger.info(f"Wrote {len(rows)} ablation row(s) to {path}")
    return path


def read_ablation(path: PathLike) -> List[AblationRow]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    frame = pd.read_csv(path, dtype={"table": str, "row": str})
    if tuple(frame.columns) != ABLATION_COLUMNS:
        raise ValidationError(f"{path}: expected columns {ABLATION_COLUMNS}")
    return [
        AblationRow(
            table=record["table"],
            name=record["row"],
            report=MetricsReport(**{name: float(record[name]) for name in REPORT_FIELDS}),
            tau=None if pd.isna(record["tau"]) else float(record["tau"]),
            final_loss=float(record["final_loss"]),
        )
        for record in frame.to_dict("records")
    ]
