import json
import random
from unittest.mock import MagicMock

import pytest

from conftest import CASE_KEYS, CASE_VALUES, make_sample, scripted
from src.base.errors import BackendError, ConfigError, PrivacyViolation
from src.base.jsonl import canonical_json
from src.cohort.features import FEATURE_NAMES, RETRIEVABLE_KEYS, RassWindow
from src.gateway.llm_gateway import ChatRequest, Role, Stage
from src.privacy.audit import AuditWriter, Direction
from src.privacy.channel import RemoteChannel
from src.privacy.payload import (
    ScanStatus,
    build_authoring_payload,
    build_remote_payload,
    scan_outbound,
    sensitive_corpus,
)
from src.privacy.tags import metadata, patient
from src.rubric.rules import assign_initial_state
from src.rubric.schema import DEFAULT_SCHEMA

ADVISORY = json.dumps({"transition_candidates": ["LIKELY_STABLE"]})


def random_values(rng):
    values = dict(CASE_VALUES)
    values.update({
        "hr_median_last1h": round(rng.uniform(45, 150), 1),
        "map_median_last1h": round(rng.uniform(45, 110), 1),
        "map_low_minutes_last1h_thr65": rng.randint(6, 60),
        "map_low_minutes_last1h_thr60": rng.randint(0, 60),
        "sofa_total": rng.randint(0, 24),
        "sofa_cardiovascular": rng.randint(0, 4),
        "lactate_latest_6h": round(rng.uniform(0.3, 9.0), 2),
        "urine_output_mlkghr_6h": round(rng.uniform(0.0, 3.0), 2),
        "norepi_eq_dose_max_1h": round(rng.uniform(0.0, 0.5), 3),
        "spo2_latest_1h": round(rng.uniform(80, 100), 1),
        "temperature_latest_4h": round(rng.uniform(35, 40), 1),
        "wbc_latest_24h": round(rng.uniform(1, 30), 1),
        "rhythm_recent_6h": rng.choice(["SR", "ST", "SB", "AF"]),
        "rass_window_last1h": RassWindow(max=0, min=rng.randint(-2, 0), n=rng.randint(1, 9)),
    })
    return values


def test_payload_refuses_patient_tagged_values():
    with pytest.raises(PrivacyViolation):
        build_remote_payload(patient("LIKELY_STABLE"), ["lactate_latest_6h"], DEFAULT_SCHEMA)
    with pytest.raises(PrivacyViolation):
        build_remote_payload("LIKELY_STABLE", [patient("lactate_latest_6h")], DEFAULT_SCHEMA)


def test_payload_refuses_values_that_are_not_names():
    with pytest.raises(PrivacyViolation):
        build_remote_payload("LIKELY_STABLE", ["1.7"], DEFAULT_SCHEMA)
    with pytest.raises(PrivacyViolation):
        build_remote_payload("NOT_A_CATEGORY", [], DEFAULT_SCHEMA)


def test_payload_carries_only_metadata():
    payload = build_remote_payload(metadata("VERY_LIKELY_STABLE"), CASE_KEYS, DEFAULT_SCHEMA)
    assert payload.keys == CASE_KEYS
    user = payload.to_messages()[1]["content"]
    assert "### PRIVACY NOTICE" in user
    assert "- Current Category: VERY_LIKELY_STABLE" in user
    for key in CASE_KEYS:
        assert f"- {key}" in user


def test_state_reason_is_not_forwarded():
    state = assign_initial_state(CASE_VALUES, DEFAULT_SCHEMA).model_copy(
        update={"reason": "Matched something (map_median_last1h < 66.0)."})
    payload = build_remote_payload(state, [], DEFAULT_SCHEMA)
    assert "66.0" not in canonical_json(payload.to_messages())


def test_randomized_payloads_scan_clean():
    rng = random.Random(99)
    for i in range(1000):
        values = random_values(rng)
        state = assign_initial_state(values, DEFAULT_SCHEMA)
        keys = rng.sample(RETRIEVABLE_KEYS, rng.randint(0, len(RETRIEVABLE_KEYS)))
        payload = build_remote_payload(state, keys, DEFAULT_SCHEMA)
        body = canonical_json(payload.to_messages())
        result = scan_outbound(body, sensitive_corpus(values, f"S{i:08d}", rng.randint(1, 72)))
        assert result.status is ScanStatus.CLEAN, result.detail


LEAK_FORMATS = [
    "\nNote: {key} was {value}",
    "\nNote: {key}={value}",
    "\nNote: value {value}mmHg",
    "\nNote: ({value}mmol/L)",
    "\nNote: x{value}",
]


def test_planted_leaks_are_caught():
    """A leaky payload builder that pastes one value into the rubric text."""
    rng = random.Random(5)
    misses = []
    for i in range(100):
        values = random_values(rng)
        stay_id = f"S{i:08d}"
        corpus = sensitive_corpus(values, stay_id, 10)
        leak_key = rng.choice([k for k in FEATURE_NAMES
                               if k not in ("has_map_coverage_last1h", "pain_max_last1h", "rass_window_last1h")
                               and values[k] not in (0, 0.0, 1, 2, 3, 4, 5)])
        leaked = values[leak_key]
        formats = LEAK_FORMATS if isinstance(leaked, (int, float)) else LEAK_FORMATS[:2]
        for template in formats:
            messages = build_remote_payload("LIKELY_STABLE", [leak_key], DEFAULT_SCHEMA).to_messages()
            messages[1]["content"] += template.format(key=leak_key, value=leaked)
            if scan_outbound(canonical_json(messages), corpus).clean:
                misses.append(template.format(key=leak_key, value=leaked))
    assert misses == []


@pytest.mark.parametrize("text", [
    "MAP was 64.0mmHg",
    "lactate 3.1mmol/L",
    "map=64mmHg",
    "MAP was 64.0 mmHg",
    "map_median_last1h=64.0",
    "trend -64.0",
])
def test_scan_catches_values_with_units_attached(text):
    corpus = sensitive_corpus({"map_median_last1h": 64.0, "lactate_latest_6h": 3.1})
    assert scan_outbound(text, corpus).status is ScanStatus.VIOLATION
    assert scan_outbound(json.dumps({"note": text}), corpus).status is ScanStatus.VIOLATION


@pytest.mark.parametrize("text", [
    "MAP was 164.0",
    "MAP was 64.05",
    "lactate 13.1",
    "see map_low_minutes_last1h_thr65 and map_median_last1h",
    "window last 640 hours",
])
def test_scan_respects_digit_boundaries(text):
    corpus = sensitive_corpus({"map_median_last1h": 64.0, "lactate_latest_6h": 3.1,
                               "map_low_minutes_last1h_thr65": 65, "sofa_total": 1})
    assert scan_outbound(json.dumps({"note": text}), corpus).clean


def test_scan_catches_stay_id_and_escaped_tokens():
    corpus = sensitive_corpus(CASE_VALUES, "S12345678", 10)
    assert not scan_outbound(json.dumps({"note": "stay S12345678"}), corpus).clean
    assert not scan_outbound(json.dumps({"note": "line\n88.0"}), corpus).clean
    assert scan_outbound(json.dumps({"note": "severity 1 to 5"}), corpus).clean


def test_authoring_payload_carries_feature_metadata():
    payload = build_authoring_payload(DEFAULT_SCHEMA)
    user = payload.to_messages()[1]["content"]
    assert "- lactate_latest_6h (PERFUSION): Most recent lactate (mmol/L) in the last 6 hours." in user
    assert "- rhythm_recent_6h (RHYTHM):" in user
    for name in FEATURE_NAMES:
        assert f"- {name} (" in user
    assert scan_outbound(canonical_json(payload.to_messages()), set()).clean


def test_channel_sends_and_audits_once():
    remote = scripted({"*/advisory": ADVISORY}, role=Role.REMOTE)
    audit = AuditWriter()
    channel = RemoteChannel(remote, audit)
    payload = build_remote_payload("VERY_LIKELY_STABLE", CASE_KEYS, DEFAULT_SCHEMA)

    response = channel.send(payload, sensitive_corpus(CASE_VALUES, "S1", 10))

    assert response.text == ADVISORY
    assert audit.count == 1
    entry = audit.entries[0]
    assert entry.direction is Direction.TO_REMOTE
    assert entry.scan_result is ScanStatus.CLEAN
    assert entry.response_digest is not None
    assert remote.requests[0].sample_id is None


def test_channel_refuses_violation_without_sending():
    remote = MagicMock()
    remote.role = Role.REMOTE
    audit = AuditWriter()
    channel = RemoteChannel(remote, audit)
    payload = build_remote_payload("VERY_LIKELY_STABLE", ["lactate_latest_6h"], DEFAULT_SCHEMA)

    with pytest.raises(PrivacyViolation):
        channel.send(payload, {"lactate_latest_6h"})

    remote.complete.assert_not_called()
    assert audit.count == 1
    assert audit.entries[0].scan_result is ScanStatus.VIOLATION


def test_channel_audits_backend_failure(tmp_path):
    remote = MagicMock()
    remote.role = Role.REMOTE
    remote.complete.side_effect = BackendError("down")
    audit = AuditWriter(tmp_path / "audit.jsonl", config_digest="cfg")
    channel = RemoteChannel(remote, audit)

    with pytest.raises(BackendError):
        channel.send(build_remote_payload("LIKELY_STABLE", [], DEFAULT_SCHEMA), set())

    rows = [json.loads(line) for line in (tmp_path / "audit.jsonl").read_text().splitlines()]
    assert len(rows) == 1
    assert rows[0]["error"] == "down"
    assert rows[0]["config_digest"] == "cfg"


def test_channel_requires_remote_role():
    with pytest.raises(ConfigError):
        RemoteChannel(scripted({"*/advisory": ADVISORY}, role=Role.LOCAL))


def test_remote_backend_rejects_plain_requests():
    remote = scripted({"*/advisory": ADVISORY}, role=Role.REMOTE)
    request = ChatRequest(messages=[{"role": "user", "content": "hi"}], stage=Stage.ADVISORY, sample_id="S1:1")
    with pytest.raises(BackendError):
        remote.complete(request)


def test_sample_values_never_reach_remote_in_engine_run(case_local, case_remote):
    from src.engine.care import CareEngine

    engine = CareEngine(DEFAULT_SCHEMA, case_local, RemoteChannel(case_remote))
    sample = make_sample()
    engine.run_care(sample)

    corpus = sensitive_corpus(sample.values(), sample.stay_id, sample.t_eval)
    for request in case_remote.requests:
        assert scan_outbound(canonical_json(request.messages), corpus).clean
        assert request.sample_id is None
