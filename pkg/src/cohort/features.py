"""
Feature universe - the 22 keys every sample carries.

Two subjective bedside summaries, seven objective keys that are visible up
front (the direct snapshot), and thirteen objective keys that are only
reachable through fact retrieval.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict


class Exposure(str, Enum):
    SUBJECTIVE_DIRECT = "SUBJECTIVE_DIRECT"
    OBJECTIVE_DIRECT = "OBJECTIVE_DIRECT"
    OBJECTIVE_RETRIEVABLE = "OBJECTIVE_RETRIEVABLE"


class ClinicalDomain(str, Enum):
    HEMODYNAMIC = "HEMODYNAMIC"
    MONITORING = "MONITORING"
    SOFA = "SOFA"
    PERFUSION = "PERFUSION"
    RENAL = "RENAL"
    PRESSOR = "PRESSOR"
    OXYGENATION = "OXYGENATION"
    GENERAL = "GENERAL"
    INFLAMMATION = "INFLAMMATION"
    RHYTHM = "RHYTHM"
    PAIN = "PAIN"
    SEDATION = "SEDATION"


class Missing(Enum):
    """Explicit marker for a feature with no data in its window."""
    MISSING = "MISSING"

    def __repr__(self) -> str:
        return "MISSING"


MISSING = Missing.MISSING


def is_missing(value: Any) -> bool:
    return value is MISSING or value is None


class RassWindow(BaseModel):
    """Range-and-count summary of the RASS observations in the last hour."""
    model_config = ConfigDict(frozen=True)

    max: int
    min: int
    n: int


@dataclass(frozen=True)
class FeatureKey:
    name: str
    exposure: Exposure
    clinical_domain: ClinicalDomain
    description: str


_S, _D, _R = Exposure.SUBJECTIVE_DIRECT, Exposure.OBJECTIVE_DIRECT, Exposure.OBJECTIVE_RETRIEVABLE
_C = ClinicalDomain

# Order is the canonical rendering order for feature blocks.
FEATURE_KEYS: List[FeatureKey] = [
    FeatureKey("pain_max_last1h", _S, _C.PAIN, "Maximum bedside pain score (0-10) in the last hour."),
    FeatureKey("rass_window_last1h", _S, _C.SEDATION, "Range-and-count summary of last-hour RASS observations."),
    FeatureKey("hr_median_last1h", _D, _C.HEMODYNAMIC, "Median heart rate in the last hour."),
    FeatureKey("map_median_last1h", _D, _C.HEMODYNAMIC, "Median mean arterial pressure in the last hour."),
    FeatureKey("map_low_minutes_last1h_thr65", _D, _C.HEMODYNAMIC, "Minutes with MAP below 65 mmHg in the last hour."),
    FeatureKey("map_low_minutes_last1h_thr60", _D, _C.HEMODYNAMIC, "Minutes with MAP below 60 mmHg in the last hour."),
    FeatureKey("has_map_coverage_last1h", _D, _C.MONITORING, "Whether any MAP reading exists in the last hour."),
    FeatureKey("sofa_total", _D, _C.SOFA, "Total SOFA score at the evaluation hour."),
    FeatureKey("sofa_cardiovascular", _D, _C.SOFA, "Cardiovascular SOFA component."),
    FeatureKey("map_covered_minutes_last1h", _R, _C.MONITORING, "Minutes with usable MAP coverage in the last hour."),
    FeatureKey("lactate_latest_6h", _R, _C.PERFUSION, "Most recent lactate (mmol/L) in the last 6 hours."),
    FeatureKey("urine_output_mlkghr_6h", _R, _C.RENAL, "Body-weight-normalized urine output rate (mL/kg/h) over 6 hours."),
    FeatureKey("norepi_eq_dose_max_1h", _R, _C.PRESSOR, "Maximum norepinephrine-equivalent dose in the last hour."),
    FeatureKey("sofa_resp", _R, _C.SOFA, "Respiratory SOFA component."),
    FeatureKey("sofa_coag", _R, _C.SOFA, "Coagulation SOFA component."),
    FeatureKey("sofa_liver", _R, _C.SOFA, "Liver SOFA component."),
    FeatureKey("sofa_cns", _R, _C.SOFA, "Central nervous system SOFA component."),
    FeatureKey("sofa_renal", _R, _C.SOFA, "Renal SOFA component."),
    FeatureKey("spo2_latest_1h", _R, _C.OXYGENATION, "Most recent SpO2 (%) in the last hour."),
    FeatureKey("temperature_latest_4h", _R, _C.GENERAL, "Most recent temperature (C) in the last 4 hours."),
    FeatureKey("wbc_latest_24h", _R, _C.INFLAMMATION, "Most recent white blood cell count in the last 24 hours."),
    FeatureKey("rhythm_recent_6h", _R, _C.RHYTHM, "Most recent cardiac rhythm label in the last 6 hours."),
]

FEATURES: Dict[str, FeatureKey] = {k.name: k for k in FEATURE_KEYS}
FEATURE_NAMES: List[str] = [k.name for k in FEATURE_KEYS]

SUBJECTIVE_KEYS = [k.name for k in FEATURE_KEYS if k.exposure is Exposure.SUBJECTIVE_DIRECT]
DIRECT_OBJECTIVE_KEYS = [k.name for k in FEATURE_KEYS if k.exposure is Exposure.OBJECTIVE_DIRECT]
RETRIEVABLE_KEYS = [k.name for k in FEATURE_KEYS if k.exposure is Exposure.OBJECTIVE_RETRIEVABLE]

# Everything visible before any retrieval
STAGE1_KEYS = SUBJECTIVE_KEYS + DIRECT_OBJECTIVE_KEYS


def keys_for_domains(domains: List[ClinicalDomain], exposure: Optional[Exposure] = None) -> List[str]:
    wanted = set(domains)
    return [
        k.name for k in FEATURE_KEYS
        if k.clinical_domain in wanted and (exposure is None or k.exposure is exposure)
    ]


def encode_value(value: Any) -> Any:
    """JSON form of a feature value: MISSING becomes null."""
    if is_missing(value):
        return None
    if isinstance(value, RassWindow):
        return value.model_dump()
    return value


def decode_value(name: str, value: Any) -> Any:
    if value is None:
        return MISSING
    if name == "rass_window_last1h":
        return RassWindow(**value)
    return value


def render_value(value: Any) -> str:
    """Human-facing rendering used in prompts and fact reports."""
    if is_missing(value):
        return "N/A"
    if isinstance(value, RassWindow):
        return f"max={value.max}, min={value.min}, n={value.n}"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.2f}".rstrip("0").rstrip(".") if value != int(value) else f"{value:.1f}"
    return str(value)
