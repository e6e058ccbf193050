"""
Constrained merge of remote transition candidates into the local rubric state.

The remote side only proposes categories; the local state moves at most one
severity step toward the nearest proposal (ties go to the higher severity).
"""

import logging
from typing import List

from pydantic import BaseModel, ConfigDict, Field

from src.rubric.rules import RubricState
from src.rubric.schema import RubricSchema

logger = logging.getLogger(__name__)

MERGE_MARKER = "[REMOTE_CANDIDATE_MERGE]"


class RemoteAdvisory(BaseModel):
    model_config = ConfigDict(frozen=True, extra="ignore")

    transition_candidates: List[str] = Field(default_factory=list)
    transition_guidance: str = ""
    transition_reasoning: str = ""

    @classmethod
    def empty(cls) -> "RemoteAdvisory":
        return cls()


def valid_candidates(advisory: RemoteAdvisory, schema: RubricSchema) -> List[str]:
    """Schema-known candidates in first-seen order; unknown names are dropped."""
    known = set(schema.names)
    kept: List[str] = []
    for name in advisory.transition_candidates:
        if name not in known:
            logger.warning(f"⚠️ Dropping unknown transition candidate {name!r}")
            continue
        if name not in kept:
            kept.append(name)
    return kept


def constrained_merge(local: RubricState, advisory: RemoteAdvisory, schema: RubricSchema) -> RubricState:
    candidates = valid_candidates(advisory, schema)
    if not candidates or local.category in candidates:
        return local

    # Nearest candidate by severity distance; equal distance prefers the higher severity
    target = min(
        (schema.by_name(name) for name in candidates),
        key=lambda c: (abs(c.severity - local.severity), -c.severity),
    )
    step = 1 if target.severity > local.severity else -1
    merged = schema.by_severity(local.severity + step)
    verb = "uplifted" if step > 0 else "lowered"
    return RubricState(
        matched=local.matched,
        category=merged.name,
        severity=merged.severity,
        reason=f"{local.reason} {MERGE_MARKER} Local rubric was {verb} one level toward {target.name}.",
    )
