"""
Exception hierarchy - every failure the pipeline can surface lives here.

Stage failures inside a workflow become trace flags; the exceptions below are
what escapes to callers (and to the CLI exit codes).
"""

from typing import Iterable


class CareError(Exception):
    """Base class for all pipeline errors."""


class IngestionError(CareError):
    """Event input could not be read or violates ordering."""


class InclusionError(CareError):
    """A built sample does not satisfy the cohort inclusion criteria."""


class InsufficientClassError(CareError):
    """Balanced sampling asked for more samples than a class holds."""

    def __init__(self, label: str, have: int, need: int):
        self.label = label
        self.have = have
        self.need = need
        super().__init__(f"insufficient {label}: pool has {have}, need {need}")


class SchemaError(CareError):
    """A rubric schema document is malformed."""


class ParseError(CareError):
    """A stage output could not be parsed against its contract."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)


class PrivacyViolation(CareError):
    """Patient-derived data was about to leave the local boundary."""

    def __init__(self, detail: str):
        self.detail = detail
        super().__init__(detail)


class BackendError(CareError):
    """An LLM backend failed after exhausting retries."""


class ConfigError(CareError):
    """Run configuration is invalid."""


class TraceMismatchError(CareError):
    """Traces and bench samples do not line up."""

    def __init__(self, orphans: Iterable[str]):
        self.orphans = sorted(orphans)
        preview = ", ".join(self.orphans[:10])
        more = f" (+{len(self.orphans) - 10} more)" if len(self.orphans) > 10 else ""
        super().__init__(f"orphaned ids: {preview}{more}")


class MixedDigestError(CareError):
    """A trace set was produced by more than one configuration."""
