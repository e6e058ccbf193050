"""
Stage-output parsing - pull the first JSON object out of model text and validate it.

Models wrap JSON in prose and code fences; we scan for the first well-formed
object and check it against the stage contract. Anything that goes wrong
surfaces as ParseError, never as another exception type.
"""

import json
from enum import Enum
from typing import Any, List, Optional, Type, Union

from pydantic import AliasChoices, BaseModel, ConfigDict, Field, ValidationError, model_validator

from src.base.domain import Action
from src.base.errors import ParseError
from src.rubric.merge import RemoteAdvisory


class ExpectedSchema(str, Enum):
    ACQUISITION = "ACQUISITION"
    SUFFICIENCY = "SUFFICIENCY"
    ADVISORY = "ADVISORY"
    DECISION = "DECISION"
    BASELINE_TURN = "BASELINE_TURN"


class AcquisitionRequest(BaseModel):
    model_config = ConfigDict(extra="ignore")

    need_data: bool
    facts_keys: List[str] = Field(default_factory=list)
    reasoning: str = ""

    @model_validator(mode="after")
    def _keys_match_flag(self) -> "AcquisitionRequest":
        if self.need_data and not self.facts_keys:
            raise ValueError("need_data is true but facts_keys is empty")
        if not self.need_data and self.facts_keys:
            raise ValueError("need_data is false but facts_keys is not empty")
        return self


class SufficiencyResult(BaseModel):
    model_config = ConfigDict(extra="ignore")

    is_sufficient: bool
    remaining_requested_keys: List[str] = Field(default_factory=list)
    updated_available_keys: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _sufficient_iff_nothing_remains(self) -> "SufficiencyResult":
        if self.is_sufficient != (not self.remaining_requested_keys):
            raise ValueError("is_sufficient must be true exactly when no requested keys remain")
        return self


class DecisionOutput(BaseModel):
    model_config = ConfigDict(extra="ignore")

    differential_diagnosis: str = ""
    final_action: Action


class BaselineTurnOutput(BaseModel):
    model_config = ConfigDict(extra="ignore")

    reasoning: str = ""
    action: Action = Field(validation_alias=AliasChoices("final_action", "action"))
    confidence: Optional[int] = Field(default=None, ge=0, le=100)


CONTRACTS: dict = {
    ExpectedSchema.ACQUISITION: AcquisitionRequest,
    ExpectedSchema.SUFFICIENCY: SufficiencyResult,
    ExpectedSchema.ADVISORY: RemoteAdvisory,
    ExpectedSchema.DECISION: DecisionOutput,
    ExpectedSchema.BASELINE_TURN: BaselineTurnOutput,
}

ParsedOutput = Union[AcquisitionRequest, SufficiencyResult, RemoteAdvisory, DecisionOutput, BaselineTurnOutput]


def extract_json_object(text: Any) -> dict:
    """Return the first JSON object that decodes cleanly from any '{' in the text."""
    if not isinstance(text, str):
        raise ParseError("output is not text")
    decoder = json.JSONDecoder()
    pos = text.find("{")
    while pos != -1:
        try:
            obj, _ = decoder.raw_decode(text, pos)
        except (ValueError, RecursionError):
            obj = None
        if isinstance(obj, dict):
            return obj
        pos = text.find("{", pos + 1)
    raise ParseError("no JSON object found")


def _describe(error: ValidationError) -> str:
    parts = []
    for err in error.errors()[:3]:
        loc = ".".join(str(p) for p in err.get("loc", ())) or "<root>"
        kind = "enum" if err.get("type") == "enum" else err.get("type", "invalid")
        parts.append(f"{loc}: {kind} ({err.get('msg', '')})")
    return "; ".join(parts)


def parse_stage_output(text: Any, expected: ExpectedSchema) -> ParsedOutput:
    expected = ExpectedSchema(expected)
    contract: Type[BaseModel] = CONTRACTS[expected]
    try:
        obj = extract_json_object(text)
        return contract.model_validate(obj)
    except ParseError:
        raise
    except ValidationError as e:
        raise ParseError(f"{expected.value}: {_describe(e)}") from e
    except Exception as e:  # noqa: BLE001
        raise ParseError(f"{expected.value}: {type(e).__name__}: {e}") from e


def format_reminder(expected: ExpectedSchema) -> str:
    """Re-prompt text used for the single repair attempt."""
    shapes = {
        ExpectedSchema.ACQUISITION: '{"need_data": true|false, "facts_keys": [...], "reasoning": "..."}',
        ExpectedSchema.SUFFICIENCY: '{"is_sufficient": true|false, "remaining_requested_keys": [...], '
                                    '"updated_available_keys": [...]}',
        ExpectedSchema.ADVISORY: '{"transition_candidates": [...], "transition_guidance": "...", '
                                 '"transition_reasoning": "..."}',
        ExpectedSchema.DECISION: '{"differential_diagnosis": "...", "final_action": "OBSERVE|TREAT_S|INVESTIGATE_O"}',
        ExpectedSchema.BASELINE_TURN: '{"reasoning": "...", "final_action": "OBSERVE|TREAT_S|INVESTIGATE_O", '
                                      '"confidence": 0-100}',
    }
    return (
        "Your previous reply could not be parsed. Reply with exactly one JSON object of this shape "
        f"and nothing else:\n{shapes[ExpectedSchema(expected)]}"
    )
