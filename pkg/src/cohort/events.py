"""
Event ingestion - JSON-lines or CSV event streams into a validated, sorted frame.

Columns: stay_id, time_min, kind, value. Records with an unknown kind or an
out-of-range value are rejected and counted, never silently coerced.
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from src.base.errors import IngestionError

logger = logging.getLogger(__name__)


class EventKind(str, Enum):
    PAIN = "PAIN"
    RASS = "RASS"
    MAP = "MAP"
    HR = "HR"
    SPO2 = "SPO2"
    TEMP = "TEMP"
    WBC = "WBC"
    LACTATE = "LACTATE"
    URINE_RATE = "URINE_RATE"
    NOREPI_EQ = "NOREPI_EQ"
    RHYTHM = "RHYTHM"
    SOFA_TOTAL = "SOFA_TOTAL"
    SOFA_RESP = "SOFA_RESP"
    SOFA_COAG = "SOFA_COAG"
    SOFA_LIVER = "SOFA_LIVER"
    SOFA_CARDIO = "SOFA_CARDIO"
    SOFA_CNS = "SOFA_CNS"
    SOFA_RENAL = "SOFA_RENAL"


SOFA_COMPONENT_KINDS = {
    EventKind.SOFA_RESP, EventKind.SOFA_COAG, EventKind.SOFA_LIVER,
    EventKind.SOFA_CARDIO, EventKind.SOFA_CNS, EventKind.SOFA_RENAL,
}

# Inclusive integer ranges for scored kinds
INTEGER_RANGES = {
    EventKind.PAIN: (0, 10),
    EventKind.RASS: (-5, 4),
    EventKind.SOFA_TOTAL: (0, 24),
    **{k: (0, 4) for k in SOFA_COMPONENT_KINDS},
}

KIND_NAMES = {k.value for k in EventKind}
COLUMNS = ["stay_id", "time_min", "kind", "value"]


class EventRecord(BaseModel):
    """One time-stamped observation for a stay."""
    model_config = ConfigDict(frozen=True)

    stay_id: str
    time: int
    kind: EventKind
    value: Union[float, str]

    @field_validator("time")
    @classmethod
    def _time_nonnegative(cls, v: int) -> int:
        if v < 0:
            raise ValueError("time must be >= 0")
        return v

    @model_validator(mode="after")
    def _value_in_range(self) -> "EventRecord":
        if self.kind is EventKind.RHYTHM:
            if not isinstance(self.value, str):
                raise ValueError("RHYTHM value must be a categorical token")
            return self
        if isinstance(self.value, str):
            raise ValueError(f"{self.kind.value} value must be numeric")
        bounds = INTEGER_RANGES.get(self.kind)
        if bounds is not None:
            lo, hi = bounds
            if self.value != int(self.value) or not lo <= self.value <= hi:
                raise ValueError(f"{self.kind.value} value {self.value} outside integer range [{lo}, {hi}]")
        return self

    def to_row(self) -> dict:
        return {"stay_id": self.stay_id, "time_min": self.time, "kind": self.kind.value, "value": self.value}


@dataclass
class IngestReport:
    frame: pd.DataFrame
    rejected: Counter = field(default_factory=Counter)

    @property
    def rejected_total(self) -> int:
        return sum(self.rejected.values())


def events_frame(records: Iterable[EventRecord]) -> pd.DataFrame:
    """Build a sorted frame from in-memory records (already validated by pydantic)."""
    rows = [r.to_row() for r in records]
    frame = pd.DataFrame(rows, columns=COLUMNS)
    return _sort(frame)


def load_events(path: Path) -> IngestReport:
    """Read a JSON-lines or CSV event file, reject bad records, sort by (stay_id, time)."""
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"event file not found: {path}")

    try:
        if path.suffix.lower() == ".csv":
            raw = pd.read_csv(path, dtype={"stay_id": str, "kind": str, "value": str})
        else:
            raw = pd.read_json(path, lines=True, dtype={"stay_id": str, "kind": str, "value": object})
    except ValueError as e:
        raise IngestionError(f"could not parse {path}: {e}") from e

    missing_cols = [c for c in COLUMNS if c not in raw.columns]
    if missing_cols:
        raise IngestionError(f"{path}: missing columns {missing_cols}")

    report = validate_frame(raw[COLUMNS].copy())
    logger.info(f"✅ Loaded {len(report.frame)} events from {path} ({report.rejected_total} rejected)")
    return report


def validate_frame(raw: pd.DataFrame) -> IngestReport:
    rejected: Counter = Counter()
    raw["stay_id"] = raw["stay_id"].astype(str)
    raw["kind"] = raw["kind"].astype(str).str.strip().str.upper()

    unknown = ~raw["kind"].isin(KIND_NAMES)
    if unknown.any():
        rejected["unknown_kind"] += int(unknown.sum())
        logger.warning(f"⚠️ Rejected {int(unknown.sum())} records with unknown kind")
    raw = raw[~unknown]

    times = pd.to_numeric(raw["time_min"], errors="coerce")
    bad_time = times.isna() | (times < 0) | (times != times.round())
    if bad_time.any():
        rejected["bad_time"] += int(bad_time.sum())
    raw = raw[~bad_time].assign(time_min=times[~bad_time].astype("int64"))

    is_rhythm = raw["kind"] == EventKind.RHYTHM.value
    numeric = pd.to_numeric(raw["value"].where(~is_rhythm), errors="coerce")
    bad_numeric = ~is_rhythm & numeric.isna()
    bad_range = pd.Series(False, index=raw.index)
    for kind, (lo, hi) in INTEGER_RANGES.items():
        mask = raw["kind"] == kind.value
        vals = numeric[mask]
        bad_range |= mask & ((vals < lo) | (vals > hi) | (vals != vals.round())).reindex(raw.index, fill_value=False)
    bad_rhythm = is_rhythm & raw["value"].isna()
    bad_value = bad_numeric | bad_range | bad_rhythm
    if bad_value.any():
        rejected["bad_value"] += int(bad_value.sum())
        logger.warning(f"⚠️ Rejected {int(bad_value.sum())} records with out-of-range values")

    clean = raw[~bad_value].copy()
    clean["value"] = clean["value"].where(
        clean["kind"] == EventKind.RHYTHM.value,
        numeric[~bad_value],
    )
    clean.loc[clean["kind"] == EventKind.RHYTHM.value, "value"] = (
        clean.loc[clean["kind"] == EventKind.RHYTHM.value, "value"].astype(str)
    )
    return IngestReport(frame=_sort(clean), rejected=rejected)


def _sort(frame: pd.DataFrame) -> pd.DataFrame:
    # mergesort is stable, so equal-time records keep a deterministic order
    return frame.sort_values(["stay_id", "time_min"], kind="mergesort").reset_index(drop=True)
