"""
Cohort builder - inclusion, SOFA-delta labels, overlap control and balanced sampling.

Turns an ingested event frame into labeled (stay_id, t_eval) samples and
writes the fixed evaluation bench.
"""

import logging
import random
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.base.domain import Label, sample_id
from src.base.errors import InclusionError, IngestionError, InsufficientClassError
from src.base.jsonl import read_jsonl, write_jsonl
from src.cohort.events import EventKind
from src.cohort.features import FEATURE_NAMES, MISSING, RassWindow, decode_value, encode_value, is_missing
from src.cohort.windows import StayTimeline, window_aggregate
from src.privacy.tags import TaggedValue, patient, untag

logger = logging.getLogger(__name__)

# Inclusion thresholds (the benchmark's fixed cohort definition)
PAIN_REQUIRED = 0
RASS_MAX_CEILING = 0
RASS_MIN_FLOOR = -3       # strict: min must be > -3
MAP_BURDEN_MINUTES = 5    # strict: burden must be > 5

LABEL_DELTA = 2
FOLLOWUP_HOURS = 12
DEFAULT_OVERLAP_GAP_HOURS = 12


class InclusionStatus(str, Enum):
    INCLUDE = "INCLUDE"
    EXCLUDE = "EXCLUDE"


@dataclass(frozen=True)
class InclusionResult:
    status: InclusionStatus
    reason: Optional[str] = None

    @property
    def included(self) -> bool:
        return self.status is InclusionStatus.INCLUDE


INCLUDE = InclusionResult(InclusionStatus.INCLUDE)


def _exclude(reason: str) -> InclusionResult:
    return InclusionResult(InclusionStatus.EXCLUDE, reason)


def check_inclusion(features: Dict[str, Any]) -> InclusionResult:
    """
    Apply the cohort criteria in a fixed order; the first failing criterion is reported.

    Accepts plain values or TaggedValues.
    """
    values = untag(features) if any(isinstance(v, TaggedValue) for v in features.values()) else features
    pain = values.get("pain_max_last1h", MISSING)
    rass = values.get("rass_window_last1h", MISSING)
    if is_missing(pain) or is_missing(rass):
        return _exclude("missing_subjective")
    if isinstance(rass, dict):
        rass = RassWindow(**rass)

    if pain != PAIN_REQUIRED:
        return _exclude("pain")
    if rass.n < 1:
        return _exclude("rass_n")
    if rass.max > RASS_MAX_CEILING:
        return _exclude("rass_max")
    if rass.min <= RASS_MIN_FLOOR:
        return _exclude("rass_min")
    burden = values.get("map_low_minutes_last1h_thr65", MISSING)
    if is_missing(burden) or burden <= MAP_BURDEN_MINUTES:
        return _exclude("map_burden")
    if values.get("has_map_coverage_last1h") is not True:
        return _exclude("map_coverage")
    return INCLUDE


def compute_label(sofa_at_t: int, sofa_next_12h: Sequence[int]) -> Label:
    """POSITIVE iff the follow-up SOFA peak is at least two points above sofa_at_t."""
    if not sofa_next_12h:
        return Label.NEGATIVE
    if max(sofa_next_12h) - sofa_at_t >= LABEL_DELTA:
        return Label.POSITIVE
    return Label.NEGATIVE


class Sample(BaseModel):
    """One benchmark row. Every feature value is tagged SENSITIVE_PATIENT."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    stay_id: str
    t_eval: int
    features: Dict[str, TaggedValue]
    label: Label
    source_digest: Optional[str] = Field(default=None)

    @field_validator("features")
    @classmethod
    def _exact_universe(cls, v: Dict[str, TaggedValue]) -> Dict[str, TaggedValue]:
        if set(v) != set(FEATURE_NAMES):
            extra = sorted(set(v) - set(FEATURE_NAMES))
            missing = sorted(set(FEATURE_NAMES) - set(v))
            raise ValueError(f"feature set mismatch: extra={extra} missing={missing}")
        for name, tv in v.items():
            if not tv.is_sensitive:
                raise ValueError(f"feature {name} must be tagged SENSITIVE_PATIENT")
        return {name: v[name] for name in FEATURE_NAMES}

    @property
    def sample_id(self) -> str:
        return sample_id(self.stay_id, self.t_eval)

    def values(self) -> Dict[str, Any]:
        return untag(self.features)

    def to_row(self) -> dict:
        row = {
            "stay_id": self.stay_id,
            "t_eval": self.t_eval,
            "features": {name: encode_value(tv.value) for name, tv in self.features.items()},
            "label": self.label.value,
        }
        if self.source_digest:
            row["source_digest"] = self.source_digest
        return row

    @classmethod
    def from_row(cls, row: dict) -> "Sample":
        try:
            features = {name: patient(decode_value(name, value)) for name, value in row["features"].items()}
            return cls(
                stay_id=str(row["stay_id"]),
                t_eval=int(row["t_eval"]),
                features=features,
                label=Label(row["label"]),
                source_digest=row.get("source_digest"),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise IngestionError(f"malformed bench row: {e}") from e

    @classmethod
    def from_features(cls, stay_id: str, t_eval: int, features: Dict[str, Any], label: Label,
                      source_digest: Optional[str] = None) -> "Sample":
        return cls(
            stay_id=stay_id,
            t_eval=t_eval,
            features={name: patient(value) for name, value in features.items()},
            label=label,
            source_digest=source_digest,
        )


def balanced_sample(pool: Iterable[Sample], n_per_class: int, seed: int) -> List[Sample]:
    """
    Deterministic class-balanced selection.

    The pool is ordered by (stay_id, t_eval) before the seeded draw, so the
    result depends only on pool contents, n and seed.
    """
    ordered = sorted(pool, key=lambda s: (s.stay_id, s.t_eval))
    by_label: Dict[Label, List[Sample]] = {Label.POSITIVE: [], Label.NEGATIVE: []}
    for s in ordered:
        by_label[s.label].append(s)

    for label in (Label.POSITIVE, Label.NEGATIVE):
        if len(by_label[label]) < n_per_class:
            raise InsufficientClassError(label.value, len(by_label[label]), n_per_class)

    rng = random.Random(seed)
    chosen: List[Sample] = []
    for label in (Label.POSITIVE, Label.NEGATIVE):
        chosen.extend(rng.sample(by_label[label], n_per_class))
    return sorted(chosen, key=lambda s: (s.stay_id, s.t_eval))


@dataclass
class PoolStats:
    candidates: int = 0
    included: int = 0
    exclusions: Counter = field(default_factory=Counter)
    labels: Counter = field(default_factory=Counter)
    rejected_records: int = 0
    stays: int = 0

    def summary(self) -> dict:
        return {
            "stays": self.stays,
            "candidates": self.candidates,
            "included": self.included,
            "labels": {k.value if isinstance(k, Label) else k: v for k, v in sorted(self.labels.items())},
            "exclusions": dict(sorted(self.exclusions.items())),
            "rejected_records": self.rejected_records,
        }


class CohortBuilder:
    """
    Scans every stay hour by hour and keeps included, non-overlapping samples.

    An hour needs a SOFA total at t_eval to be labeled; hours closer than
    `overlap_gap_hours` to the previous accepted sample of the same stay are
    skipped.
    """

    def __init__(self, overlap_gap_hours: int = DEFAULT_OVERLAP_GAP_HOURS,
                 followup_hours: int = FOLLOWUP_HOURS, source_digest: Optional[str] = None):
        self.overlap_gap_hours = overlap_gap_hours
        self.followup_hours = followup_hours
        self.source_digest = source_digest
        self.stats = PoolStats()

    def build_pool(self, frame: pd.DataFrame) -> List[Sample]:
        pool: List[Sample] = []
        for stay_id, stay_frame in frame.groupby("stay_id", sort=True):
            self.stats.stays += 1
            timeline = StayTimeline(str(stay_id), stay_frame)
            pool.extend(self.samples_for_stay(timeline))
        logger.info(
            f"📊 Pool: {self.stats.included} included of {self.stats.candidates} candidate hours "
            f"across {self.stats.stays} stays"
        )
        return pool

    def samples_for_stay(self, timeline: StayTimeline) -> List[Sample]:
        accepted: List[Sample] = []
        last_accepted: Optional[int] = None
        for t_eval in range(1, timeline.last_hour + 1):
            self.stats.candidates += 1
            features = window_aggregate(timeline, timeline.stay_id, t_eval)
            verdict = check_inclusion(features)
            if not verdict.included:
                self.stats.exclusions[verdict.reason] += 1
                continue
            sofa_at_t = features["sofa_total"]
            if sofa_at_t is MISSING:
                self.stats.exclusions["missing_sofa"] += 1
                continue
            if last_accepted is not None and t_eval - last_accepted < self.overlap_gap_hours:
                self.stats.exclusions["overlap"] += 1
                continue

            follow = timeline.hourly_series(EventKind.SOFA_TOTAL, t_eval + 1, t_eval + self.followup_hours)
            label = compute_label(sofa_at_t, follow)
            sample = Sample.from_features(timeline.stay_id, t_eval, features, label, self.source_digest)
            # Re-validate after construction
            if not check_inclusion(sample.features).included:
                raise InclusionError(f"sample {sample.sample_id} failed inclusion after construction")
            accepted.append(sample)
            last_accepted = t_eval
            self.stats.included += 1
            self.stats.labels[label] += 1
        return accepted


def write_bench(path: Path, samples: Iterable[Sample]) -> int:
    count = write_jsonl(path, (s.to_row() for s in samples))
    logger.info(f"✅ Wrote {count} samples to {path}")
    return count


def read_bench(path: Path) -> List[Sample]:
    return [Sample.from_row(row) for row in read_jsonl(path)]


def class_counts(samples: Iterable[Sample]) -> Tuple[int, int]:
    counts = Counter(s.label for s in samples)
    return counts[Label.POSITIVE], counts[Label.NEGATIVE]
