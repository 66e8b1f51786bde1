"""CSV rows `tau,mca_s,mca_u,h,r_s,r_u,h_r`; tau is empty for ungated reports."""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import pandas as pd

from dvbe_lab.exceptions import ValidationError

from .models import REPORT_FIELDS, MetricsReport

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ("tau",) + REPORT_FIELDS

TauReport = Tuple[Optional[float], MetricsReport]


def reports_frame(rows: Sequence[TauReport]) -> pd.DataFrame:
    records = [{"tau": tau, **report.as_dict()} for tau, report in rows]
    return pd.DataFrame.from_records(records, columns=list(REPORT_COLUMNS))


def write_reports(rows: Sequence[TauReport], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(rows).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    logger.info(f"Wrote {len(rows)} metrics row(s) to {path}")
    return path


def write_report(report: MetricsReport, path: Union[str, Path], tau: Optional[float] = None) -> Path:
    return write_reports([(tau, report)], path)


def read_reports(path: Union[str, Path]) -> List[TauReport]:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"File not found: {path}")
    frame = pd.read_csv(path)
    missing = [column for column in REPORT_COLUMNS if column not in frame.columns]
    if missing:
        raise ValidationError(f"{path}: missing columns {missing}")
    rows = []
    for record in frame.to_dict("records"):
        tau = None if pd.isna(record["tau"]) else float(record["tau"])
        rows.append((tau, MetricsReport(**{name: float(record[name]) for name in REPORT_FIELDS})))
    return rows
