"""
Format texte d'une cellule : une ligne `i j op_name` par arête, dans n'importe
quel ordre. Le nombre de nœuds est le plus grand j rencontré.
"""
import logging
from pathlib import Path
from typing import Union

from dvbe_lab.exceptions import ValidationError

from .models import CellSpec, OperationKind

logger = logging.getLogger(__name__)


def dumps_cell(cell: CellSpec) -> str:
    return "".join(f"{i} {j} {kind.value}\n" for (i, j), kind in cell.edges())


def loads_cell(text: str) -> CellSpec:
    operations = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        tokens = line.split()
        if len(tokens) != 3:
            raise ValidationError(f"cell line {number}: expected 'i j op_name', got {line!r}")
        try:
            edge = (int(tokens[0]), int(tokens[1]))
            kind = OperationKind(tokens[2])
        except ValueError as exc:
            raise ValidationError(f"cell line {number}: {exc}")
        if not 0 <= edge[0] < edge[1]:
            raise ValidationError(f"cell line {number}: edge {edge} must satisfy 0 <= i < j")
        if edge in operations:
            raise ValidationError(f"cell line {number}: edge {edge} listed twice")
        operations[edge] = kind
    if not operations:
        raise ValidationError("empty cell description")
    return CellSpec(n_nodes=max(j for _, j in operations), operations=operations)


def save_cell(cell: CellSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_cell(cell), encoding="utf-8")
    logger.info(f"Wrote cell with {cell.n_nodes} nodes to {path}")
    return path


def load_cell(path: Union[str, Path]) -> CellSpec:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    return loads_cell(path.read_text(encoding="utf-8"))
