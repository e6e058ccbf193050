"""
Sensitivity tags for everything that flows through the pipeline.

Patient-derived values are SENSITIVE_PATIENT; names, category labels and
rubric text are TASK_METADATA. Only the latter may ever leave the local side.
"""

from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict


class Sensitivity(str, Enum):
    SENSITIVE_PATIENT = "SENSITIVE_PATIENT"
    TASK_METADATA = "TASK_METADATA"


class TaggedValue(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    value: Any
    sensitivity: Sensitivity

    @property
    def is_sensitive(self) -> bool:
        return self.sensitivity is Sensitivity.SENSITIVE_PATIENT


def patient(value: Any) -> TaggedValue:
    return TaggedValue(value=value, sensitivity=Sensitivity.SENSITIVE_PATIENT)


def metadata(value: Any) -> TaggedValue:
    return TaggedValue(value=value, sensitivity=Sensitivity.TASK_METADATA)


def untag(features: Dict[str, TaggedValue]) -> Dict[str, Any]:
    """Plain values for local computation. Never pass the result to a remote call."""
    return {name: tv.value for name, tv in features.items()}
