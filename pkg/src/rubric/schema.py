"""
Rubric schema - the five ordered severity categories shared by every stage.

The schema is task metadata: names, descriptions and evidence domains only.
It is safe to show to the remote model verbatim.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.base.errors import SchemaError
from src.cohort.features import ClinicalDomain

logger = logging.getLogger(__name__)


class Category(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    severity: int = Field(ge=1, le=5)
    description: str
    evidence_requirements: List[ClinicalDomain] = Field(default_factory=list)


class RubricSchema(BaseModel):
    model_config = ConfigDict(frozen=True)

    categories: List[Category]

    @model_validator(mode="after")
    def _five_distinct_levels(self) -> "RubricSchema":
        severities = sorted(c.severity for c in self.categories)
        if severities != [1, 2, 3, 4, 5]:
            raise ValueError(f"severities must be exactly 1..5, got {severities}")
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise ValueError("category names must be unique")
        return self

    @property
    def names(self) -> List[str]:
        return [c.name for c in self.ordered()]

    def ordered(self) -> List[Category]:
        return sorted(self.categories, key=lambda c: c.severity)

    def by_name(self, name: str) -> Optional[Category]:
        for c in self.categories:
            if c.name == name:
                return c
        return None

    def by_severity(self, severity: int) -> Category:
        for c in self.categories:
            if c.severity == severity:
                return c
        raise SchemaError(f"no category with severity {severity}")

    def to_document(self) -> Dict[str, list]:
        """The on-disk / on-wire shape: {"rubric_schema": [...]}, highest severity first."""
        return {
            "rubric_schema": [
                {
                    "name": c.name,
                    "severity": c.severity,
                    "description": c.description,
                    "evidence_requirements": [d.value for d in c.evidence_requirements],
                }
                for c in reversed(self.ordered())
            ]
        }

    def render_text(self) -> str:
        lines = []
        for c in reversed(self.ordered()):
            evidence = ", ".join(d.value for d in c.evidence_requirements) or "none listed"
            lines.append(f"- {c.name} (severity {c.severity}): {c.description} Typical evidence: {evidence}.")
        return "\n".join(lines)


_D = ClinicalDomain

DEFAULT_CATEGORIES = [
    Category(
        name="VERY_LIKELY_WORSENING",
        severity=5,
        description="Clear evidence of active deterioration across multiple objective domains.",
        evidence_requirements=[_D.HEMODYNAMIC, _D.PERFUSION, _D.PRESSOR, _D.SOFA, _D.OXYGENATION],
    ),
    Category(
        name="LIKELY_WORSENING",
        severity=4,
        description="Strong concern for worsening, but with less complete cross-domain confirmation.",
        evidence_requirements=[_D.HEMODYNAMIC, _D.PERFUSION, _D.RENAL, _D.PRESSOR, _D.SOFA],
    ),
    Category(
        name="POTENTIAL_OCCULT_SHOCK",
        severity=3,
        description="Subjectively calm appearance, but objective deviations suggest possible occult instability.",
        evidence_requirements=[_D.HEMODYNAMIC, _D.PERFUSION, _D.RENAL, _D.PRESSOR],
    ),
    Category(
        name="LIKELY_STABLE",
        severity=2,
        description="No strong evidence of active worsening, though limited abnormalities may still be present.",
        evidence_requirements=[_D.HEMODYNAMIC, _D.SOFA, _D.PERFUSION],
    ),
    Category(
        name="VERY_LIKELY_STABLE",
        severity=1,
        description="Calm bedside state and no clear evidence of active deterioration.",
        evidence_requirements=[_D.HEMODYNAMIC, _D.SOFA],
    ),
]

DEFAULT_SCHEMA = RubricSchema(categories=DEFAULT_CATEGORIES)


def schema_from_document(doc: dict) -> RubricSchema:
    if not isinstance(doc, dict) or not isinstance(doc.get("rubric_schema"), list):
        raise SchemaError("document must be an object with a 'rubric_schema' array")
    try:
        return RubricSchema(categories=[Category(**entry) for entry in doc["rubric_schema"]])
    except (ValidationError, TypeError) as e:
        raise SchemaError(f"invalid rubric schema: {e}") from e


def load_schema(path: Optional[Path] = None) -> RubricSchema:
    """Load a schema file, or the embedded default when no path is given."""
    if path is None:
        return DEFAULT_SCHEMA
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise SchemaError(f"rubric file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise SchemaError(f"rubric file {path} is not valid JSON: {e.msg}") from e
    schema = schema_from_document(doc)
    logger.info(f"Loaded rubric schema from {path} ({len(schema.categories)} categories)")
    return schema
