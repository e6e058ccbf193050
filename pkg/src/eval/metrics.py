"""
Confusion-matrix metrics.

    TPR   = TP / (TP + FN)
    TNR   = TN / (TN + FP)
    BA    = (TPR + TNR) / 2
    Gmean = sqrt(TPR * TNR)
    MCC   = (TP*TN - FP*FN) / sqrt((TP+FP)(TP+FN)(TN+FP)(TN+FN)),  0 if any factor is 0

Invalid predictions are counted but excluded from every rate.
"""

import math
from typing import Dict, Iterable, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from src.base.domain import Label, Prediction

UNDEFINED = "UNDEFINED"


class ConfusionCounts(BaseModel):
    tp: int = Field(default=0, ge=0)
    fp: int = Field(default=0, ge=0)
    tn: int = Field(default=0, ge=0)
    fn: int = Field(default=0, ge=0)
    invalid_count: int = Field(default=0, ge=0)
    n_total: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _total_adds_up(self) -> "ConfusionCounts":
        if self.tp + self.fp + self.tn + self.fn + self.invalid_count != self.n_total:
            raise ValueError("tp + fp + tn + fn + invalid_count must equal n_total")
        return self

    @property
    def valid(self) -> int:
        return self.n_total - self.invalid_count

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[Label, Prediction]]) -> "ConfusionCounts":
        c = {"tp": 0, "fp": 0, "tn": 0, "fn": 0, "invalid_count": 0}
        n = 0
        for label, prediction in pairs:
            n += 1
            if prediction is Prediction.INVALID:
                c["invalid_count"] += 1
            elif label is Label.POSITIVE:
                c["tp" if prediction is Prediction.POSITIVE else "fn"] += 1
            else:
                c["fp" if prediction is Prediction.POSITIVE else "tn"] += 1
        return cls(n_total=n, **c)


class Metrics(BaseModel):
    tpr: float
    tnr: float
    ba: float
    gmean: float
    mcc: float

    def rounded(self, digits: int = 4) -> Dict[str, float]:
        return {k: round(v, digits) for k, v in self.model_dump().items()}


def compute_metrics(counts: ConfusionCounts) -> Optional[Metrics]:
    """None (reported as UNDEFINED) when either class has no valid sample."""
    tp, fp, tn, fn = counts.tp, counts.fp, counts.tn, counts.fn
    if tp + fn == 0 or tn + fp == 0:
        return None
    tpr = tp / (tp + fn)
    tnr = tn / (tn + fp)
    denominator = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = 0.0 if denominator == 0 else (tp * tn - fp * fn) / math.sqrt(denominator)
    return Metrics(tpr=tpr, tnr=tnr, ba=(tpr + tnr) / 2, gmean=math.sqrt(tpr * tnr), mcc=mcc)
