"""
Remote payloads and the outbound scan.

RemotePayload can only be built from TASK_METADATA; anything tagged
SENSITIVE_PATIENT (or any bare value that is not a known name) is refused
with PrivacyViolation. scan_outbound is the second line: it checks the exact
serialized bytes against the current sample's values before anything is sent.
"""

import json
import logging
import re
from enum import Enum
from typing import Any, Iterable, List, Optional, Set, Union

from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from src.base.errors import PrivacyViolation
from src.cohort.features import FEATURE_KEYS, FEATURE_NAMES, FEATURES, RassWindow, is_missing, render_value
from src.privacy.tags import Sensitivity, TaggedValue, metadata
from src.rubric.rules import RubricState
from src.rubric.schema import RubricSchema

logger = logging.getLogger(__name__)

# Metadata text must not contain numerals other than the severity levels 1-5.
TASK_DESCRIPTION = (
    "Decide whether a subjectively calm ICU patient is heading for organ-function worsening, "
    "meaning a rise of two or more SOFA points within the next twelve hours. "
    "Categories are ordered by severity from 1 (most stable) to 5 (most likely worsening)."
)

AUTHORING_TASK = (
    "Design an ordered rubric of exactly five categories with severities 1 to 5 for judging whether a "
    "subjectively calm ICU patient is heading for organ-function worsening within the next twelve hours. "
    "Use only the evidence types listed."
)

EXEMPT_TOKENS = {"1", "2", "3", "4", "5"}

# A number ends where digits end; letters and punctuation around it do not shield it.
NUMERIC_TOKEN = re.compile(r"(?<![\d.])-?\d+(?:\.\d+)?(?!\d)(?!\.\d)")
WORD_TOKEN = re.compile(r"[A-Za-z0-9_]+")
# Feature names carry digits of their own (thr65, last1h); they are masked before the numeric pass.
FEATURE_NAME_TOKEN = re.compile(
    r"(?<![A-Za-z0-9_])(?:"
    + "|".join(re.escape(n) for n in sorted(FEATURE_NAMES, key=len, reverse=True))
    + r")(?![A-Za-z0-9_])"
)


def _require_metadata(item: Any, what: str) -> Any:
    if isinstance(item, TaggedValue):
        if item.sensitivity is not Sensitivity.TASK_METADATA:
            raise PrivacyViolation(f"{what}: refusing SENSITIVE_PATIENT value")
        return item.value
    return item


class RemotePayload(BaseModel):
    """Everything the remote model may see. Every field is task metadata."""
    model_config = ConfigDict(frozen=True)

    current_category: Optional[TaggedValue] = None
    available_feature_keys: List[TaggedValue]
    rubric_schema: TaggedValue
    task_description: TaggedValue
    evidence_catalog: Optional[TaggedValue] = None

    @field_validator("current_category", "rubric_schema", "task_description", "evidence_catalog")
    @classmethod
    def _metadata_text(cls, v: Optional[TaggedValue]) -> Optional[TaggedValue]:
        if v is None:
            return v
        if v.sensitivity is not Sensitivity.TASK_METADATA:
            raise ValueError("SENSITIVE_PATIENT value in remote payload")
        if not isinstance(v.value, str):
            raise ValueError(f"remote payload text fields must be strings, got {type(v.value).__name__}")
        return v

    @field_validator("available_feature_keys")
    @classmethod
    def _known_names(cls, v: List[TaggedValue]) -> List[TaggedValue]:
        for item in v:
            if item.sensitivity is not Sensitivity.TASK_METADATA:
                raise ValueError("SENSITIVE_PATIENT value in remote payload")
            if not isinstance(item.value, str) or item.value not in FEATURES:
                raise ValueError(f"{item.value!r} is not a feature name")
        return v

    @property
    def keys(self) -> List[str]:
        return [k.value for k in self.available_feature_keys]

    def to_messages(self) -> List[dict]:
        evidence = "\n".join(f"- {k}" for k in self.keys) or "- (none retrieved)"
        if self.current_category is None:
            return self._authoring_messages(self.evidence_catalog.value if self.evidence_catalog else evidence)
        user = (
            "### PRIVACY NOTICE\n"
            "You are a REMOTE module. You will NOT receive any actual patient measurements or values. "
            "You will only receive:\n"
            "- The patient's current risk category\n"
            "- The types of clinical data that have been collected\n"
            "- Shared rubric-level category definitions\n\n"
            f"### Task\n{self.task_description.value}\n\n"
            f"### Current Patient State\n- Current Category: {self.current_category.value}\n\n"
            f"### Available Evidence Types\n{evidence}\n\n"
            f"### Category Definitions\n{self.rubric_schema.value}\n\n"
            "### Output\n"
            "Propose the categories the patient could plausibly move to once the listed evidence is read. "
            "Reply with one JSON object: "
            '{"transition_candidates": [category names], "transition_guidance": "...", '
            '"transition_reasoning": "..."}'
        )
        return [
            {"role": "system", "content": "You are a Clinical Risk Transition Analyst."},
            {"role": "user", "content": user},
        ]

    def _authoring_messages(self, evidence: str) -> List[dict]:
        user = (
            f"### Task\n{self.task_description.value}\n\n"
            f"### Available Evidence Types\n{evidence}\n\n"
            f"### Example Shape\n{self.rubric_schema.value}\n\n"
            "### Output\n"
            'Reply with one JSON object: {"rubric_schema": [{"name": "...", "severity": 5, '
            '"description": "...", "evidence_requirements": ["HEMODYNAMIC"]}]}'
        )
        return [
            {"role": "system", "content": "You are a clinical rubric designer."},
            {"role": "user", "content": user},
        ]


def build_remote_payload(state: Union[RubricState, TaggedValue, str], keys: Iterable[Any],
                         schema: RubricSchema, task_description: str = TASK_DESCRIPTION) -> RemotePayload:
    """
    Assemble the Stage 3 payload. Only the category name of `state` is used;
    its reason text is local and never forwarded.
    """
    if isinstance(state, RubricState):
        category = state.category
    else:
        category = _require_metadata(state, "current_category")
    if not isinstance(category, str) or schema.by_name(category) is None:
        raise PrivacyViolation(f"current_category {category!r} is not a schema category")

    names: List[str] = []
    for item in keys:
        value = _require_metadata(item, "available_feature_keys")
        if not isinstance(value, str) or value not in FEATURES:
            raise PrivacyViolation(f"available_feature_keys: refusing non-name value {value!r}")
        names.append(value)

    try:
        return RemotePayload(
            current_category=metadata(category),
            available_feature_keys=[metadata(n) for n in names],
            rubric_schema=metadata(schema.render_text()),
            task_description=metadata(task_description),
        )
    except ValidationError as e:
        raise PrivacyViolation(f"remote payload rejected: {e.errors()[0].get('msg')}") from e


def render_feature_catalog() -> str:
    """One line per feature: name, clinical domain and description. Names and text only."""
    return "\n".join(f"- {k.name} ({k.clinical_domain.value}): {k.description}" for k in FEATURE_KEYS)


def build_authoring_payload(example: RubricSchema) -> RemotePayload:
    return RemotePayload(
        current_category=None,
        available_feature_keys=[metadata(n) for n in FEATURE_NAMES],
        rubric_schema=metadata(example.render_text()),
        task_description=metadata(AUTHORING_TASK),
        evidence_catalog=metadata(render_feature_catalog()),
    )


class ScanStatus(str, Enum):
    CLEAN = "CLEAN"
    VIOLATION = "VIOLATION"


class ScanResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: ScanStatus
    detail: Optional[str] = None

    @property
    def clean(self) -> bool:
        return self.status is ScanStatus.CLEAN


CLEAN = ScanResult(status=ScanStatus.CLEAN)


def _number_forms(value: Union[int, float]) -> Set[str]:
    forms = {repr(value), render_value(value)}
    if isinstance(value, float) and value.is_integer():
        forms.add(str(int(value)))
    if isinstance(value, int):
        forms.add(f"{value}.0")
    return forms


def sensitive_corpus(values: dict, stay_id: Optional[str] = None, t_eval: Optional[int] = None) -> Set[str]:
    """
    Canonical string forms of every value in a sample, plus its identifiers.

    Booleans are skipped; they render as words that also appear in metadata.
    """
    corpus: Set[str] = set()
    for value in values.values():
        if isinstance(value, TaggedValue):
            value = value.value
        if is_missing(value) or isinstance(value, bool):
            continue
        if isinstance(value, RassWindow):
            for part in (value.max, value.min, value.n):
                corpus |= _number_forms(part)
        elif isinstance(value, (int, float)):
            corpus |= _number_forms(value)
        else:
            corpus.add(str(value))
    if stay_id is not None:
        corpus.add(str(stay_id))
    if t_eval is not None:
        corpus |= _number_forms(int(t_eval))
    return corpus


def _string_leaves(node: Any) -> Iterable[str]:
    if isinstance(node, str):
        yield node
    elif isinstance(node, dict):
        for k, v in node.items():
            yield str(k)
            yield from _string_leaves(v)
    elif isinstance(node, list):
        for v in node:
            yield from _string_leaves(v)
    elif node is not None and not isinstance(node, bool):
        yield str(node)


def scan_outbound(serialized: Union[str, bytes], corpus: Set[str]) -> ScanResult:
    """
    VIOLATION iff a corpus value appears in the payload.

    Numbers match on digit boundaries only, so "64.0mmHg" and "map=64" hit
    while "164.0" and "64.05" do not. JSON payloads are scanned leaf by leaf
    so escapes such as \\n never glue onto a value.
    """
    raw = serialized.decode("utf-8") if isinstance(serialized, bytes) else serialized
    try:
        text = "\n".join(_string_leaves(json.loads(raw)))
    except ValueError:
        text = raw
    numeric = {v for v in corpus if NUMERIC_TOKEN.fullmatch(v)}
    words = corpus - numeric

    for token in NUMERIC_TOKEN.findall(FEATURE_NAME_TOKEN.sub(" ", text)):
        for form in (token, token.lstrip("-")):
            if form in numeric and form not in EXEMPT_TOKENS:
                return ScanResult(status=ScanStatus.VIOLATION, detail=f"numeric value {form} found in payload")
    if words:
        for token in WORD_TOKEN.findall(text):
            if token in words:
                return ScanResult(status=ScanStatus.VIOLATION, detail=f"categorical value {token!r} found in payload")
        for phrase in words:
            if not WORD_TOKEN.fullmatch(phrase) and phrase in text:
                return ScanResult(status=ScanStatus.VIOLATION, detail=f"categorical value {phrase!r} found in payload")
    return CLEAN
