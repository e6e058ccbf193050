import json

import pytest

from src.base.domain import Label
from src.cohort.builder import Sample
from src.cohort.features import RassWindow
from src.gateway.llm_gateway import BackendSpec, Role, ScriptedBackend
from src.rubric.schema import DEFAULT_SCHEMA

# Bedside snapshot and retrievable values of the documented walk-through case
CASE_VALUES = {
    "pain_max_last1h": 0,
    "rass_window_last1h": RassWindow(max=0, min=-1, n=2),
    "hr_median_last1h": 88.0,
    "map_median_last1h": 66.0,
    "map_low_minutes_last1h_thr65": 12,
    "map_low_minutes_last1h_thr60": 3,
    "has_map_coverage_last1h": True,
    "sofa_total": 3,
    "sofa_cardiovascular": 1,
    "map_covered_minutes_last1h": 60,
    "lactate_latest_6h": 1.1,
    "urine_output_mlkghr_6h": 0.8,
    "norepi_eq_dose_max_1h": 0.0,
    "sofa_resp": 1,
    "sofa_coag": 0,
    "sofa_liver": 0,
    "sofa_cns": 0,
    "sofa_renal": 1,
    "spo2_latest_1h": 97.0,
    "temperature_latest_4h": 37.1,
    "wbc_latest_24h": 9.4,
    "rhythm_recent_6h": "SR",
}

CASE_KEYS = ["map_median_last1h", "lactate_latest_6h", "urine_output_mlkghr_6h", "norepi_eq_dose_max_1h"]

CASE_CANDIDATES = ["VERY_LIKELY_WORSENING", "LIKELY_WORSENING", "POTENTIAL_OCCULT_SHOCK", "LIKELY_STABLE"]


def make_sample(stay_id="S00000001", t_eval=10, label=Label.NEGATIVE, **overrides) -> Sample:
    values = dict(CASE_VALUES)
    values.update(overrides)
    return Sample.from_features(stay_id, t_eval, values, label)


def scripted(script, role=Role.LOCAL, name="script.json") -> ScriptedBackend:
    return ScriptedBackend(BackendSpec.parse(f"mock:{name}", role=role), script)


def turn(action, confidence=None, reasoning="ok") -> str:
    body = {"reasoning": reasoning, "final_action": action}
    if confidence is not None:
        body["confidence"] = confidence
    return json.dumps(body)


@pytest.fixture
def schema():
    return DEFAULT_SCHEMA


@pytest.fixture
def case_sample():
    return make_sample()


@pytest.fixture
def case_local():
    return scripted({
        "*/acquisition/0": json.dumps({
            "need_data": True,
            "facts_keys": CASE_KEYS,
            "reasoning": "Objective snapshot suggests a possible hypotensive burden.",
        }),
        "*/decision": json.dumps({
            "differential_diagnosis": "Isolated hypotensive burden without corroborating evidence.",
            "final_action": "INVESTIGATE_O",
        }),
    }, name="case_local.json")


@pytest.fixture
def case_remote():
    return scripted({
        "*/advisory": json.dumps({
            "transition_candidates": CASE_CANDIDATES,
            "transition_guidance": "Prioritize cross-domain convergence.",
            "transition_reasoning": "Check for early shock physiology.",
        }),
    }, role=Role.REMOTE, name="case_remote.json")
