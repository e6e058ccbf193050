"""
Rule cascade - programmatic rubric state assignment.

    state(x) = max{ s : rule_s(x) fires }, falling back to severity 1

Rules are evaluated from the highest severity down and the first match wins.
A MISSING input never satisfies a condition. Thresholds come from the run
config (RuleThresholds), not from this module.
"""

import logging
from typing import Any, Callable, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field

from src.cohort.features import DIRECT_OBJECTIVE_KEYS, SUBJECTIVE_KEYS, is_missing
from src.privacy.tags import TaggedValue, untag
from src.rubric.schema import RubricSchema

logger = logging.getLogger(__name__)

FALLBACK_REASON = "Fallback to {name} (No specific threshold met)."
NEUTRAL_SEVERITY = 3


class RuleThresholds(BaseModel):
    """Rule cascade cut-offs. Units: minutes, mmHg, bpm, mmol/L, mL/kg/h, %, degrees C."""

    # severity 5
    critical_cardio_sofa: int = 4
    critical_map60_minutes: int = 30
    # severity 4
    worsening_sofa_total: int = 10
    worsening_map60_minutes: int = 15
    # severity 3
    occult_map65_minutes: int = 30
    occult_lactate: float = 2.0
    # severity 2: any single moderate abnormality
    moderate_map_median: float = 65.0
    moderate_hr: float = 110.0
    moderate_cardio_sofa: int = 2
    moderate_sofa_total: int = 6
    moderate_urine: float = 0.5
    moderate_norepi: float = 0.0
    moderate_spo2: float = 92.0
    moderate_temperature: float = 38.3
    moderate_wbc: float = 12.0


class RubricState(BaseModel):
    model_config = ConfigDict(frozen=True)

    matched: bool
    category: str
    severity: int = Field(ge=1, le=5)
    reason: str

    def to_dict(self) -> dict:
        return self.model_dump()


Condition = Tuple[str, Callable[[Dict[str, Any], RuleThresholds], bool]]


def _ge(key: str, attr: str) -> Condition:
    return (f"{key} >= {{{attr}}}", lambda f, t: not is_missing(f.get(key)) and f[key] >= getattr(t, attr))


def _lt(key: str, attr: str) -> Condition:
    return (f"{key} < {{{attr}}}", lambda f, t: not is_missing(f.get(key)) and f[key] < getattr(t, attr))


def _gt(key: str, attr: str) -> Condition:
    return (f"{key} > {{{attr}}}", lambda f, t: not is_missing(f.get(key)) and f[key] > getattr(t, attr))


def _eq(key: str, attr: str) -> Condition:
    return (f"{key} == {{{attr}}}", lambda f, t: not is_missing(f.get(key)) and f[key] == getattr(t, attr))


# Each severity fires when all conditions of any one clause hold.
RULES: List[Tuple[int, List[List[Condition]]]] = [
    (5, [[_eq("sofa_cardiovascular", "critical_cardio_sofa"),
          _ge("map_low_minutes_last1h_thr60", "critical_map60_minutes")]]),
    (4, [[_ge("sofa_total", "worsening_sofa_total")],
         [_ge("map_low_minutes_last1h_thr60", "worsening_map60_minutes")]]),
    (3, [[_ge("map_low_minutes_last1h_thr65", "occult_map65_minutes")],
         [_ge("lactate_latest_6h", "occult_lactate")]]),
    (2, [[_lt("map_median_last1h", "moderate_map_median")],
         [_ge("hr_median_last1h", "moderate_hr")],
         [_ge("sofa_cardiovascular", "moderate_cardio_sofa")],
         [_ge("sofa_total", "moderate_sofa_total")],
         [_lt("urine_output_mlkghr_6h", "moderate_urine")],
         [_gt("norepi_eq_dose_max_1h", "moderate_norepi")],
         [_lt("spo2_latest_1h", "moderate_spo2")],
         [_ge("temperature_latest_4h", "moderate_temperature")],
         [_ge("wbc_latest_24h", "moderate_wbc")]]),
]


def _plain(features: Dict[str, Any]) -> Dict[str, Any]:
    if any(isinstance(v, TaggedValue) for v in features.values()):
        return untag(features)
    return dict(features)


def _fire(features: Dict[str, Any], thresholds: RuleThresholds) -> Optional[Tuple[int, str]]:
    for severity, clauses in RULES:
        for clause in clauses:
            if all(check(features, thresholds) for _, check in clause):
                text = " and ".join(label.format(**thresholds.model_dump()) for label, _ in clause)
                return severity, text
    return None


def _cascade(features: Dict[str, Any], schema: RubricSchema, thresholds: RuleThresholds) -> RubricState:
    values = _plain(features)
    fallback = schema.by_severity(1)

    if all(is_missing(values.get(k)) for k in SUBJECTIVE_KEYS):
        missing = ", ".join(SUBJECTIVE_KEYS)
        return RubricState(
            matched=False,
            category=fallback.name,
            severity=1,
            reason=f"Fallback to {fallback.name} (Missing subjective inputs: {missing}).",
        )

    hit = _fire(values, thresholds)
    if hit is None:
        state = RubricState(matched=True, category=fallback.name, severity=1,
                            reason=FALLBACK_REASON.format(name=fallback.name))
    else:
        severity, text = hit
        cat = schema.by_severity(severity)
        state = RubricState(matched=True, category=cat.name, severity=severity,
                            reason=f"Matched {cat.name} ({text}).")

    absent = [k for k in SUBJECTIVE_KEYS + DIRECT_OBJECTIVE_KEYS if is_missing(values.get(k))]
    if absent:
        state = state.model_copy(update={"reason": f"{state.reason} Missing inputs: {', '.join(absent)}."})
    return state


def assign_initial_state(features: Dict[str, Any], schema: RubricSchema,
                         thresholds: Optional[RuleThresholds] = None) -> RubricState:
    """Stage 1: the cascade over the subjective and direct objective inputs only."""
    visible = {k: v for k, v in features.items() if k in SUBJECTIVE_KEYS or k in DIRECT_OBJECTIVE_KEYS}
    return _cascade(visible, schema, thresholds or RuleThresholds())


def recompute_state(features: Dict[str, Any], schema: RubricSchema,
                    thresholds: Optional[RuleThresholds] = None) -> RubricState:
    """Stage 3 local recomputation: the same cascade over everything retrieved so far."""
    return _cascade(features, schema, thresholds or RuleThresholds())


def neutral_state(schema: RubricSchema) -> RubricState:
    """Starting state when Stage 1 is ablated."""
    cat = schema.by_severity(NEUTRAL_SEVERITY)
    return RubricState(matched=False, category=cat.name, severity=cat.severity,
                       reason=f"Neutral starting state {cat.name} (initial assignment disabled).")
