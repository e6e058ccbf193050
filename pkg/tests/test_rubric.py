import itertools
import json

import pytest

from conftest import CASE_VALUES
from src.base.errors import SchemaError
from src.cohort.features import MISSING, RassWindow
from src.rubric.merge import MERGE_MARKER, RemoteAdvisory, constrained_merge
from src.rubric.rules import (
    RubricState,
    RuleThresholds,
    assign_initial_state,
    neutral_state,
    recompute_state,
)
from src.rubric.schema import DEFAULT_SCHEMA, load_schema, schema_from_document

CALM = {
    "pain_max_last1h": 0,
    "rass_window_last1h": RassWindow(max=0, min=-1, n=2),
    "hr_median_last1h": 80.0,
    "map_median_last1h": 72.0,
    "map_low_minutes_last1h_thr65": 8,
    "map_low_minutes_last1h_thr60": 0,
    "has_map_coverage_last1h": True,
    "sofa_total": 2,
    "sofa_cardiovascular": 0,
}


def state_at(severity):
    cat = DEFAULT_SCHEMA.by_severity(severity)
    return RubricState(matched=True, category=cat.name, severity=severity, reason="local")


def merge_oracle(local_severity, candidate_severities):
    if local_severity in candidate_severities:
        return local_severity
    best = None
    for s in candidate_severities:
        d = abs(s - local_severity)
        if best is None or d < best[0] or (d == best[0] and s > best[1]):
            best = (d, s)
    return local_severity + (1 if best[1] > local_severity else -1)


def test_case_initial_state_is_fallback():
    state = assign_initial_state(CASE_VALUES, DEFAULT_SCHEMA)
    assert state.to_dict() == {
        "matched": True,
        "category": "VERY_LIKELY_STABLE",
        "severity": 1,
        "reason": "Fallback to VERY_LIKELY_STABLE (No specific threshold met).",
    }


@pytest.mark.parametrize("overrides, severity", [
    ({}, 1),
    ({"sofa_cardiovascular": 4, "map_low_minutes_last1h_thr60": 30}, 5),
    ({"sofa_cardiovascular": 4, "map_low_minutes_last1h_thr60": 29}, 4),
    ({"sofa_total": 10}, 4),
    ({"map_low_minutes_last1h_thr65": 30}, 3),
    ({"map_median_last1h": 64.9}, 2),
    ({"hr_median_last1h": 110.0}, 2),
    ({"sofa_total": 6}, 2),
])
def test_cascade_highest_rule_wins(overrides, severity):
    features = {**CALM, **overrides}
    assert assign_initial_state(features, DEFAULT_SCHEMA).severity == severity


def test_initial_state_ignores_retrievable_keys():
    features = {**CALM, "lactate_latest_6h": 4.0}
    assert assign_initial_state(features, DEFAULT_SCHEMA).severity == 1
    assert recompute_state(features, DEFAULT_SCHEMA).category == "POTENTIAL_OCCULT_SHOCK"


def test_missing_never_satisfies_a_rule():
    features = {**CALM, "map_median_last1h": MISSING}
    state = assign_initial_state(features, DEFAULT_SCHEMA)
    assert state.severity == 1
    assert "Missing inputs: map_median_last1h." in state.reason


def test_missing_subjective_inputs_fall_back_unmatched():
    features = {**CALM, "pain_max_last1h": MISSING, "rass_window_last1h": MISSING}
    state = assign_initial_state(features, DEFAULT_SCHEMA)
    assert state.matched is False
    assert state.category == "VERY_LIKELY_STABLE"


def test_thresholds_come_from_config():
    features = {**CALM, "hr_median_last1h": 100.0}
    assert assign_initial_state(features, DEFAULT_SCHEMA).severity == 1
    assert assign_initial_state(features, DEFAULT_SCHEMA, RuleThresholds(moderate_hr=95.0)).severity == 2


def test_neutral_state():
    state = neutral_state(DEFAULT_SCHEMA)
    assert state.category == "POTENTIAL_OCCULT_SHOCK"
    assert state.matched is False


def test_merge_exhaustive_oracle():
    severities = [1, 2, 3, 4, 5]
    checked = 0
    for local in severities:
        for r in range(1, 6):
            for subset in itertools.combinations(severities, r):
                names = [DEFAULT_SCHEMA.by_severity(s).name for s in subset]
                merged = constrained_merge(state_at(local), RemoteAdvisory(transition_candidates=names),
                                           DEFAULT_SCHEMA)
                assert merged.severity == merge_oracle(local, subset), (local, subset)
                assert abs(merged.severity - local) <= 1
                checked += 1
    assert checked == 5 * 31


def test_merge_case_uplift():
    local = assign_initial_state(CASE_VALUES, DEFAULT_SCHEMA)
    advisory = RemoteAdvisory(transition_candidates=[
        "VERY_LIKELY_WORSENING", "LIKELY_WORSENING", "POTENTIAL_OCCULT_SHOCK", "LIKELY_STABLE"])

    merged = constrained_merge(local, advisory, DEFAULT_SCHEMA)

    assert merged.category == "LIKELY_STABLE"
    assert merged.severity == 2
    assert merged.reason.startswith(local.reason)
    assert MERGE_MARKER in merged.reason
    assert "uplifted one level toward LIKELY_STABLE" in merged.reason


def test_merge_noop_cases():
    local = state_at(3)
    assert constrained_merge(local, RemoteAdvisory.empty(), DEFAULT_SCHEMA) == local
    assert constrained_merge(local, RemoteAdvisory(transition_candidates=["BOGUS"]), DEFAULT_SCHEMA) == local
    member = RemoteAdvisory(transition_candidates=["VERY_LIKELY_WORSENING", "POTENTIAL_OCCULT_SHOCK"])
    assert constrained_merge(local, member, DEFAULT_SCHEMA) == local


def test_merge_tie_prefers_higher():
    advisory = RemoteAdvisory(transition_candidates=["LIKELY_STABLE", "LIKELY_WORSENING"])
    assert constrained_merge(state_at(3), advisory, DEFAULT_SCHEMA).severity == 4


def test_schema_document_round_trip(tmp_path):
    doc = DEFAULT_SCHEMA.to_document()
    assert [c["severity"] for c in doc["rubric_schema"]] == [5, 4, 3, 2, 1]
    path = tmp_path / "rubric.json"
    path.write_text(json.dumps(doc))
    assert load_schema(path) == DEFAULT_SCHEMA


@pytest.mark.parametrize("doc", [
    {},
    {"rubric_schema": "nope"},
    {"rubric_schema": DEFAULT_SCHEMA.to_document()["rubric_schema"][:4]},
    {"rubric_schema": [dict(c, name="SAME") for c in DEFAULT_SCHEMA.to_document()["rubric_schema"]]},
    {"rubric_schema": [dict(c, evidence_requirements=["TELEPATHY"])
                       for c in DEFAULT_SCHEMA.to_document()["rubric_schema"]]},
])
def test_schema_validation_errors(doc):
    with pytest.raises(SchemaError):
        schema_from_document(doc)


def test_load_schema_missing_file(tmp_path):
    with pytest.raises(SchemaError):
        load_schema(tmp_path / "absent.json")
    assert load_schema(None) is DEFAULT_SCHEMA
