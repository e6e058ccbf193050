"""
Balance gate - programmatic check on escalation.

    support_count = Σ_d flag_d(evidence),  d ∈ {hemodynamic, perfusion, renal, pressor, organ}
    INVESTIGATE_O survives only if support_count ≥ min_support

The gate never escalates and never touches OBSERVE or TREAT_S.
"""

from enum import Enum
from typing import Any, Dict

from pydantic import BaseModel, ConfigDict

from src.base.domain import Action
from src.cohort.features import is_missing

SUPPORT_DOMAINS = ("hemodynamic", "perfusion", "renal", "pressor", "organ")


class GateThresholds(BaseModel):
    hemodynamic_map65_minutes: int = 10
    hemodynamic_map_median: float = 65.0
    perfusion_lactate: float = 2.0
    renal_urine: float = 0.5
    pressor_norepi: float = 0.0
    organ_sofa_total: int = 8
    min_support: int = 2


class GateDecision(str, Enum):
    NONE = "NONE"
    DOWNGRADE_TO_TREAT_S = "DOWNGRADE_TO_TREAT_S"


class GateOutcome(BaseModel):
    model_config = ConfigDict(frozen=True)

    candidate_action: Action
    final_action: Action
    gate: GateDecision
    support_count: int
    support_flags: Dict[str, bool]


def _num(evidence: Dict[str, Any], key: str):
    value = evidence.get(key)
    return None if is_missing(value) or isinstance(value, bool) else value


def support_flags(evidence: Dict[str, Any], thresholds: GateThresholds) -> Dict[str, bool]:
    """One flag per domain; MISSING evidence counts as no support."""
    low65 = _num(evidence, "map_low_minutes_last1h_thr65")
    median = _num(evidence, "map_median_last1h")
    lactate = _num(evidence, "lactate_latest_6h")
    urine = _num(evidence, "urine_output_mlkghr_6h")
    norepi = _num(evidence, "norepi_eq_dose_max_1h")
    sofa = _num(evidence, "sofa_total")
    return {
        "hemodynamic": (low65 is not None and low65 >= thresholds.hemodynamic_map65_minutes)
                       or (median is not None and median < thresholds.hemodynamic_map_median),
        "perfusion": lactate is not None and lactate >= thresholds.perfusion_lactate,
        "renal": urine is not None and urine < thresholds.renal_urine,
        "pressor": norepi is not None and norepi > thresholds.pressor_norepi,
        "organ": sofa is not None and sofa >= thresholds.organ_sofa_total,
    }


def apply_gate(candidate: Action, flags: Dict[str, bool], thresholds: GateThresholds) -> GateOutcome:
    count = sum(1 for d in SUPPORT_DOMAINS if flags.get(d))
    if candidate is Action.INVESTIGATE_O and count < thresholds.min_support:
        final, gate = Action.TREAT_S, GateDecision.DOWNGRADE_TO_TREAT_S
    else:
        final, gate = candidate, GateDecision.NONE
    return GateOutcome(
        candidate_action=candidate,
        final_action=final,
        gate=gate,
        support_count=count,
        support_flags={d: bool(flags.get(d)) for d in SUPPORT_DOMAINS},
    )


def balance_gate(candidate: Action, evidence: Dict[str, Any], thresholds: GateThresholds) -> GateOutcome:
    return apply_gate(candidate, support_flags(evidence, thresholds), thresholds)
