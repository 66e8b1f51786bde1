import logging
from pathlib import Path
from typing import Union

import pandas as pd

from dvbe_lab.exceptions import ValidationError

from .services import HISTOGRAM_COLUMNS

logger = logging.getLogger(__name__)


def write_entropy_histogram(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, columns=list(HISTOGRAM_COLUMNS), float_format="%.6f", lineterminator="\n")
    logger.info(f"Wrote entropy histogram with {len(frame)} bins to {path}")
    return path


def read_entropy_histogram(path: Union[str, Path]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    frame = pd.read_csv(path)
    if tuple(frame.columns) != HISTOGRAM_COLUMNS:
        raise ValidationError(f"{path}: expected columns {HISTOGRAM_COLUMNS}, got {tuple(frame.columns)}")
    return frame
