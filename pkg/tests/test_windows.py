import random

import pandas as pd
import pytest

from src.base.errors import IngestionError
from src.cohort.events import EventKind, EventRecord, events_frame, load_events, validate_frame
from src.cohort.features import FEATURE_NAMES, MISSING, RassWindow
from src.cohort.windows import StayTimeline, window_aggregate

STAY = "S1"


def ev(time, kind, value, stay=STAY):
    return EventRecord(stay_id=stay, time=time, kind=kind, value=value)


def brute_force_map(readings, end, threshold):
    """Minute-by-minute carry-forward over end-59..end."""
    low = covered = 0
    for minute in range(end - 59, end + 1):
        current = None
        for t, v in readings:
            if end - 60 < t <= minute:
                current = v
        if current is not None:
            covered += 1
            low += current < threshold
    return low, covered


def test_map_carry_forward_example():
    """Readings at minutes 5, 20, 30, 50 over the first hour."""
    readings = [(5, 70), (20, 62), (30, 61), (50, 66)]
    events = [ev(t, EventKind.MAP, v) for t, v in readings]

    features = window_aggregate(events, STAY, 1)

    assert features["map_median_last1h"] == 64.0
    assert features["map_low_minutes_last1h_thr65"] == 30
    assert features["map_low_minutes_last1h_thr60"] == 0
    assert features["map_covered_minutes_last1h"] == 56
    assert features["has_map_coverage_last1h"] is True


def test_map_matches_brute_force_oracle():
    rng = random.Random(11)
    for _ in range(200):
        t_eval = rng.randint(1, 5)
        end = t_eval * 60
        times = sorted(rng.sample(range(0, end + 1), rng.randint(1, 8)))
        readings = [(t, rng.randint(50, 80)) for t in times]
        features = window_aggregate([ev(t, EventKind.MAP, v) for t, v in readings], STAY, t_eval)

        in_window = [(t, v) for t, v in readings if end - 60 < t <= end]
        if not in_window:
            assert features["map_low_minutes_last1h_thr65"] is MISSING
            assert features["map_covered_minutes_last1h"] == 0
            continue
        for thr in (65, 60):
            low, covered = brute_force_map(readings, end, thr)
            assert features[f"map_low_minutes_last1h_thr{thr}"] == low
            assert features["map_covered_minutes_last1h"] == covered


def test_empty_pain_window_is_missing():
    events = [ev(10, EventKind.PAIN, 0), ev(70, EventKind.RASS, -1)]
    features = window_aggregate(events, STAY, 2)
    assert features["pain_max_last1h"] is MISSING


def test_single_rass_event_summary():
    features = window_aggregate([ev(30, EventKind.RASS, -1)], STAY, 1)
    assert features["rass_window_last1h"] == RassWindow(max=-1, min=-1, n=1)


def test_window_is_half_open():
    """An event exactly at t - L is outside, one exactly at t is inside."""
    events = [ev(60, EventKind.PAIN, 3), ev(120, EventKind.PAIN, 0)]
    features = window_aggregate(events, STAY, 2)
    assert features["pain_max_last1h"] == 0


def test_no_map_readings_leaves_burden_missing():
    features = window_aggregate([ev(30, EventKind.HR, 80)], STAY, 1)
    assert features["map_median_last1h"] is MISSING
    assert features["map_low_minutes_last1h_thr65"] is MISSING
    assert features["map_covered_minutes_last1h"] == 0
    assert features["has_map_coverage_last1h"] is False


def test_lookbacks_and_latest_values():
    events = [
        ev(100, EventKind.WBC, 11.0),
        ev(200, EventKind.LACTATE, 3.0),
        ev(500, EventKind.LACTATE, 1.4),
        ev(350, EventKind.TEMP, 37.0),
        ev(590, EventKind.URINE_RATE, 0.4),
        ev(560, EventKind.URINE_RATE, 0.6),
        ev(545, EventKind.NOREPI_EQ, 0.05),
        ev(580, EventKind.NOREPI_EQ, 0.1),
        ev(200, EventKind.RHYTHM, "AF"),
        ev(595, EventKind.SPO2, 95),
    ]
    events.sort(key=lambda e: e.time)

    features = window_aggregate(events, STAY, 10)

    assert features["wbc_latest_24h"] == 11.0
    assert features["lactate_latest_6h"] == 1.4
    assert features["temperature_latest_4h"] is MISSING  # 350 is outside (360, 600]
    assert features["urine_output_mlkghr_6h"] == pytest.approx(0.5)
    assert features["norepi_eq_dose_max_1h"] == 0.1
    assert features["rhythm_recent_6h"] is MISSING  # 200 is outside (240, 600]
    assert features["spo2_latest_1h"] == 95.0


def test_sofa_is_hourly_value_at_t_eval():
    events = [
        ev(110, EventKind.SOFA_TOTAL, 4),
        ev(170, EventKind.SOFA_TOTAL, 6),
        ev(170, EventKind.SOFA_TOTAL, 5),
        ev(230, EventKind.SOFA_CARDIO, 2),
    ]
    features = window_aggregate(events, STAY, 3)
    assert features["sofa_total"] == 6  # intra-minute duplicates take the max
    assert features["sofa_cardiovascular"] is MISSING  # 230 belongs to hour 4


def test_intra_minute_duplicates_are_averaged():
    events = [ev(30, EventKind.HR, 80), ev(30, EventKind.HR, 90), ev(40, EventKind.HR, 100)]
    features = window_aggregate(events, STAY, 1)
    assert features["hr_median_last1h"] == 92.5


def test_all_22_keys_in_canonical_order():
    features = window_aggregate([ev(30, EventKind.PAIN, 0)], STAY, 1)
    assert list(features) == FEATURE_NAMES
    assert len(features) == 22


def test_unsorted_input_raises():
    events = [ev(50, EventKind.MAP, 70), ev(10, EventKind.MAP, 60)]
    with pytest.raises(IngestionError):
        window_aggregate(events, STAY, 1)


def test_shuffled_input_is_equivalent_after_ingestion_sort():
    rng = random.Random(3)
    events = [ev(t, EventKind.MAP, rng.randint(55, 80)) for t in range(0, 180, 7)]
    events += [ev(t, EventKind.RASS, rng.randint(-2, 0)) for t in range(3, 180, 11)]
    shuffled = list(events)
    rng.shuffle(shuffled)

    expected = window_aggregate(events_frame(events), STAY, 3)
    assert window_aggregate(events_frame(shuffled), STAY, 3) == expected


def test_validate_frame_rejects_and_counts():
    raw = pd.DataFrame([
        {"stay_id": "S1", "time_min": 10, "kind": "MAP", "value": "70"},
        {"stay_id": "S1", "time_min": 5, "kind": "BLOOD_GAS", "value": "7.3"},
        {"stay_id": "S1", "time_min": -1, "kind": "HR", "value": "80"},
        {"stay_id": "S1", "time_min": 20, "kind": "PAIN", "value": "11"},
        {"stay_id": "S1", "time_min": 15, "kind": "rhythm", "value": "SR"},
    ])

    report = validate_frame(raw)

    assert report.rejected == {"unknown_kind": 1, "bad_time": 1, "bad_value": 1}
    assert report.rejected_total == 3
    assert list(report.frame["time_min"]) == [10, 15]
    assert list(report.frame["kind"]) == ["MAP", "RHYTHM"]


def test_load_events_csv_and_jsonl(tmp_path):
    csv = tmp_path / "events.csv"
    csv.write_text("stay_id,time_min,kind,value\nS2,30,MAP,70\nS1,20,RHYTHM,SR\nS1,10,MAP,64\n")
    report = load_events(csv)
    assert list(report.frame["stay_id"]) == ["S1", "S1", "S2"]

    jsonl = tmp_path / "events.jsonl"
    jsonl.write_text('{"stay_id": "S1", "time_min": 10, "kind": "MAP", "value": 64}\n')
    assert len(load_events(jsonl).frame) == 1


def test_load_events_errors(tmp_path):
    with pytest.raises(IngestionError):
        load_events(tmp_path / "absent.jsonl")
    bad = tmp_path / "bad.csv"
    bad.write_text("stay_id,time\nS1,1\n")
    with pytest.raises(IngestionError):
        load_events(bad)


def test_event_record_ranges():
    with pytest.raises(ValueError):
        EventRecord(stay_id="S", time=0, kind=EventKind.PAIN, value=11)
    with pytest.raises(ValueError):
        EventRecord(stay_id="S", time=0, kind=EventKind.RASS, value=-1.5)
    with pytest.raises(ValueError):
        EventRecord(stay_id="S", time=-5, kind=EventKind.MAP, value=70)
    assert EventRecord(stay_id="S", time=0, kind=EventKind.SOFA_TOTAL, value=24).value == 24


def test_timeline_hourly_series_skips_missing_hours():
    frame = events_frame([ev(60, EventKind.SOFA_TOTAL, 2), ev(180, EventKind.SOFA_TOTAL, 4)])
    timeline = StayTimeline(STAY, frame)
    assert timeline.hourly_series(EventKind.SOFA_TOTAL, 1, 3) == [2, 4]
    assert isinstance(timeline.hourly(EventKind.SOFA_TOTAL, 1), int)
