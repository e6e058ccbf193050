"""
Run aggregation and reports.

One trace file -> one RunReport. Several trace files -> a comparison table
with one row per file. Metrics only count valid predictions; tokens per
sample averages over every sample, invalid ones included.
"""

import json
import logging
from collections import Counter
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import pandas as pd
from pydantic import BaseModel, Field

from src.base.errors import MixedDigestError, TraceMismatchError
from src.base.jsonl import read_jsonl
from src.cohort.builder import Sample
from src.engine.trace import TraceBase
from src.eval.metrics import UNDEFINED, ConfusionCounts, compute_metrics

logger = logging.getLogger(__name__)

MetricValue = Union[float, str]

TABLE_COLUMNS = ["Workflow", "Local", "Remote", "Valid rate", "TPR", "TNR", "BA", "G-mean", "MCC", "Tokens/Sample"]


class RunReport(BaseModel):
    workflow: str
    backends: Dict[str, str] = Field(default_factory=dict)
    n_total: int
    counts: ConfusionCounts
    valid_rate: float
    tpr: MetricValue = UNDEFINED
    tnr: MetricValue = UNDEFINED
    ba: MetricValue = UNDEFINED
    gmean: MetricValue = UNDEFINED
    mcc: MetricValue = UNDEFINED
    tokens_per_sample: float
    tokens_estimated: bool = False
    tokens_include_invalid: bool = True
    remote_calls: int = 0
    flags: Dict[str, int] = Field(default_factory=dict)
    config_digest: Optional[str] = None
    config_digests: List[str] = Field(default_factory=list)

    @property
    def local_backend(self) -> str:
        if "local" in self.backends:
            return self.backends["local"]
        agents = [self.backends[k] for k in sorted(self.backends) if k.startswith("agent_")]
        return " / ".join(dict.fromkeys(agents)) or "-"

    @property
    def remote_backend(self) -> str:
        return self.backends.get("remote", "-")

    def table_row(self) -> dict:
        def fmt(v: MetricValue) -> str:
            return v if isinstance(v, str) else f"{v:.4f}"

        return {
            "Workflow": self.workflow,
            "Local": self.local_backend,
            "Remote": self.remote_backend,
            "Valid rate": f"{self.valid_rate:.4f}",
            "TPR": fmt(self.tpr),
            "TNR": fmt(self.tnr),
            "BA": fmt(self.ba),
            "G-mean": fmt(self.gmean),
            "MCC": fmt(self.mcc),
            "Tokens/Sample": f"{self.tokens_per_sample:.1f}" + ("*" if self.tokens_estimated else ""),
        }


def read_traces(path: Path) -> List[TraceBase]:
    return [TraceBase.model_validate(row) for row in read_jsonl(path)]


def _match(traces: Sequence[TraceBase], bench: Sequence[Sample]) -> None:
    bench_ids = {s.sample_id for s in bench}
    seen = Counter(t.sample_id for t in traces)
    orphans = {sid for sid in seen if sid not in bench_ids}
    orphans |= {sid for sid in bench_ids if sid not in seen}
    orphans |= {sid for sid, n in seen.items() if n > 1}
    if orphans:
        raise TraceMismatchError(orphans)


def aggregate_run(traces: Sequence[TraceBase], bench: Sequence[Sample], allow_mixed: bool = False) -> RunReport:
    if not traces:
        raise TraceMismatchError([s.sample_id for s in bench] or ["<no traces>"])
    _match(traces, bench)

    digests = sorted({t.config_digest for t in traces if t.config_digest})
    if len(digests) > 1 and not allow_mixed:
        raise MixedDigestError(f"traces come from {len(digests)} configurations: {', '.join(d[:12] for d in digests)}")

    labels = {s.sample_id: s.label for s in bench}
    counts = ConfusionCounts.from_pairs((labels[t.sample_id], t.prediction) for t in traces)
    metrics = compute_metrics(counts)
    if metrics is None:
        logger.warning("⚠️ a class has no valid prediction, metrics are UNDEFINED")

    workflows = sorted({t.workflow for t in traces})
    backends: Dict[str, str] = {}
    for t in sorted(traces, key=lambda t: t.sample_id):
        for role, backend_id in t.backends.items():
            backends.setdefault(role, backend_id)

    total_tokens = sum(t.usage.total for t in traces)
    flags = Counter(f for t in traces for f in t.flags)

    report = RunReport(
        workflow="+".join(workflows),
        backends=backends,
        n_total=counts.n_total,
        counts=counts,
        valid_rate=counts.valid / counts.n_total,
        tokens_per_sample=total_tokens / counts.n_total,
        tokens_estimated=any(c.estimated for t in traces for c in t.calls),
        remote_calls=sum(t.remote_calls for t in traces),
        flags=dict(sorted(flags.items())),
        config_digest=digests[0] if len(digests) == 1 else None,
        config_digests=digests,
        **(metrics.model_dump() if metrics else {}),
    )
    logger.info(f"📊 {report.workflow}: valid {report.valid_rate:.4f}, "
                f"BA {report.table_row()['BA']}, MCC {report.table_row()['MCC']}")
    return report


def render_json(reports: Iterable[RunReport]) -> str:
    rows = [r.model_dump(mode="json") for r in reports]
    return json.dumps(rows, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def render_table(reports: Iterable[RunReport]) -> str:
    reports = list(reports)
    frame = pd.DataFrame([r.table_row() for r in reports], columns=TABLE_COLUMNS)
    text = frame.to_string(index=False)
    if any(r.tokens_estimated for r in reports):
        text += "\n* token counts partly estimated (endpoint omitted usage)"
    return text + "\n"


def compare_runs(trace_paths: Sequence[Path], bench: Sequence[Sample], allow_mixed: bool = False) -> List[RunReport]:
    return [aggregate_run(read_traces(p), bench, allow_mixed=allow_mixed) for p in trace_paths]
