"""
Prompt builders for the local model (CARE stages 2 and 4, and the baselines).

These prompts carry patient values and must only ever reach LOCAL backends.
The remote prompt lives with RemotePayload in the privacy package.
"""

from typing import Any, Dict, List

from src.cohort.features import (
    DIRECT_OBJECTIVE_KEYS,
    FEATURE_KEYS,
    FEATURES,
    RETRIEVABLE_KEYS,
    SUBJECTIVE_KEYS,
    keys_for_domains,
    render_value,
)
from src.rubric.rules import RubricState
from src.rubric.schema import RubricSchema

ACTIONS_TEXT = (
    "- OBSERVE: continue routine monitoring\n"
    "- TREAT_S: treat the presenting symptoms conservatively\n"
    "- INVESTIGATE_O: escalate and investigate occult organ-function worsening"
)

SNAPSHOT_LABELS = {
    "pain_max_last1h": "Pain max (last 1h)",
    "rass_window_last1h": "RASS window (last 1h)",
    "hr_median_last1h": "HR median (last 1h)",
    "map_median_last1h": "MAP median (last 1h)",
    "map_low_minutes_last1h_thr65": "MAP <65 minutes (last 1h)",
    "map_low_minutes_last1h_thr60": "MAP <60 minutes (last 1h)",
    "has_map_coverage_last1h": "MAP coverage present (last 1h)",
    "sofa_total": "SOFA total",
    "sofa_cardiovascular": "SOFA cardiovascular",
}


def render_snapshot(values: Dict[str, Any]) -> str:
    lines = ["### Bedside Presentation"]
    lines += [f"- {SNAPSHOT_LABELS[k]}: {render_value(values.get(k))}" for k in SUBJECTIVE_KEYS]
    lines += ["", "### Locally Available Objective Snapshot", "These are already available before any new retrieval."]
    lines += [f"- {SNAPSHOT_LABELS[k]}: {render_value(values.get(k))}" for k in DIRECT_OBJECTIVE_KEYS]
    return "\n".join(lines)


def render_feature_block(values: Dict[str, Any]) -> str:
    """The flat 22-feature block every baseline sees, in canonical key order."""
    return "\n".join(f"- {k.name} = {render_value(values.get(k.name))}  ({k.description})" for k in FEATURE_KEYS)


def acquisition_messages(state: RubricState, values: Dict[str, Any], schema: RubricSchema,
                         retrieved: Dict[str, Any], pending: List[str]) -> List[dict]:
    category = schema.by_name(state.category)
    required = category.evidence_requirements if category else []
    suggested = keys_for_domains(required)
    catalog = "\n".join(f"- {k}: {FEATURES[k].description}" for k in RETRIEVABLE_KEYS)
    have = "\n".join(f"- {k} = {render_value(v)}" for k, v in retrieved.items()) or "- none yet"
    still = ", ".join(pending) or "none"

    user = (
        f"{render_snapshot(values)}\n\n"
        "### Current Programmatic State\n"
        f"- Current Category: {state.category}\n"
        f"- Rationale: {state.reason}\n"
        f"- Evidence typically required for this category: "
        f"{', '.join(d.value for d in required) or 'none listed'}\n"
        f"- Keys covering that evidence: {', '.join(suggested) or 'none'}\n\n"
        "### Retrievable Facts\n"
        f"{catalog}\n\n"
        "### Already Retrieved\n"
        f"{have}\n"
        f"- Still pending from earlier requests: {still}\n\n"
        "### Task: Data Acquisition Planning\n"
        "Review the current state and determine what additional objective data is needed before "
        "decision-making. Reply with one JSON object: "
        '{"need_data": true|false, "facts_keys": [keys], "reasoning": "..."}. '
        "facts_keys must be empty when need_data is false."
    )
    return [
        {"role": "system", "content": "You are an expert ICU AI Triage Agent."},
        {"role": "user", "content": user},
    ]


def decision_messages(values: Dict[str, Any], facts_report: str, initial: RubricState,
                      updated: RubricState) -> List[dict]:
    user = (
        f"{render_snapshot(values)}\n\n"
        "You requested additional objective clinical data, and the Laboratory and Monitoring System returned:\n\n"
        f"{facts_report}\n\n"
        "### Heuristic Pre-Assessment (for reference only)\n"
        f"- Initial heuristic estimate: {initial.category}\n"
        f"- Updated heuristic estimate: {updated.category}\n"
        f"- Updated-state rationale: {updated.reason}\n\n"
        "### Final Triage Decision\n"
        "You must now make the final clinical triage decision. Choose one action:\n"
        f"{ACTIONS_TEXT}\n\n"
        'Reply with one JSON object: {"differential_diagnosis": "...", "final_action": "OBSERVE|TREAT_S|INVESTIGATE_O"}'
    )
    return [
        {"role": "system", "content": "You are an expert ICU AI Clinical Triage Safety Agent."},
        {"role": "user", "content": user},
    ]


BASELINE_SYSTEM = "You are an expert ICU AI Clinical Triage Agent."


def baseline_task(feature_block: str, with_confidence: bool = False) -> str:
    shape = '{"reasoning": "...", "final_action": "OBSERVE|TREAT_S|INVESTIGATE_O"'
    shape += ', "confidence": 0-100}' if with_confidence else "}"
    return (
        "A subjectively calm ICU patient is being evaluated. Decide whether occult organ-function "
        "worsening should be investigated.\n\n"
        "### Patient Features\n"
        f"{feature_block}\n\n"
        "### Actions\n"
        f"{ACTIONS_TEXT}\n\n"
        f"Reply with one JSON object: {shape}"
    )
