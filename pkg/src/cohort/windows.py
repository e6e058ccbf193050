"""
Window aggregation - turns one stay's event stream into the 22-feature vector at an evaluation hour.

All windows are half-open (t - L, t] in minutes, with t = t_eval * 60.
Missing data always comes back as MISSING, never as a default number.
"""

import logging
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from src.base.errors import IngestionError
from src.cohort.events import EventKind, EventRecord, SOFA_COMPONENT_KINDS, events_frame
from src.cohort.features import FEATURE_NAMES, MISSING, RassWindow

logger = logging.getLogger(__name__)

MINUTES_PER_HOUR = 60

# Lookbacks in minutes
LOOKBACK = {
    "bedside": 60,
    "map": 60,
    "hr": 60,
    "norepi": 60,
    "spo2": 60,
    "temperature": 240,
    "lactate": 360,
    "urine": 360,
    "rhythm": 360,
    "wbc": 1440,
}

MAP_LOW_THRESHOLDS = (65, 60)

RAW_KINDS = {EventKind.PAIN, EventKind.RASS}
MAX_KINDS = {EventKind.SOFA_TOTAL, *SOFA_COMPONENT_KINDS, EventKind.RHYTHM}

SOFA_FEATURE_KINDS = {
    "sofa_total": EventKind.SOFA_TOTAL,
    "sofa_cardiovascular": EventKind.SOFA_CARDIO,
    "sofa_resp": EventKind.SOFA_RESP,
    "sofa_coag": EventKind.SOFA_COAG,
    "sofa_liver": EventKind.SOFA_LIVER,
    "sofa_cns": EventKind.SOFA_CNS,
    "sofa_renal": EventKind.SOFA_RENAL,
}


class _Series:
    """Sorted (time, value) arrays for one event kind."""

    __slots__ = ("times", "values")

    def __init__(self, times: np.ndarray, values: np.ndarray):
        self.times = times
        self.values = values

    def window(self, start: int, end: int) -> slice:
        # (start, end]
        lo = int(np.searchsorted(self.times, start, side="right"))
        hi = int(np.searchsorted(self.times, end, side="right"))
        return slice(lo, hi)


class StayTimeline:
    """
    Per-kind view of a single stay, built once and queried for many evaluation hours.

    Intra-minute duplicates are collapsed on construction: averaged for
    continuous measurements, max for SOFA scores and rhythm tokens. Pain and
    RASS keep every raw observation.
    """

    def __init__(self, stay_id: str, frame: pd.DataFrame):
        self.stay_id = stay_id
        times = frame["time_min"].to_numpy()
        if len(times) > 1 and np.any(np.diff(times) < 0):
            raise IngestionError(f"events for stay {stay_id} are not sorted by time")

        self.last_time = int(times[-1]) if len(times) else 0
        self._series: Dict[EventKind, _Series] = {}
        for kind_name, group in frame.groupby("kind", sort=False):
            kind = EventKind(kind_name)
            self._series[kind] = self._collapse(kind, group)

    @staticmethod
    def _collapse(kind: EventKind, group: pd.DataFrame) -> _Series:
        if kind in RAW_KINDS:
            return _Series(group["time_min"].to_numpy(dtype=np.int64), group["value"].to_numpy(dtype=float))
        if kind is EventKind.RHYTHM:
            collapsed = group.groupby("time_min", sort=True)["value"].agg(lambda s: max(str(v) for v in s))
            return _Series(collapsed.index.to_numpy(dtype=np.int64), collapsed.to_numpy(dtype=object))
        how = "max" if kind in MAX_KINDS else "mean"
        collapsed = group.assign(value=group["value"].astype(float)).groupby("time_min", sort=True)["value"].agg(how)
        return _Series(collapsed.index.to_numpy(dtype=np.int64), collapsed.to_numpy(dtype=float))

    def _get(self, kind: EventKind) -> Optional[_Series]:
        return self._series.get(kind)

    def window_values(self, kind: EventKind, end: int, lookback: int) -> np.ndarray:
        series = self._get(kind)
        if series is None:
            return np.array([])
        return series.values[series.window(end - lookback, end)]

    def window_points(self, kind: EventKind, end: int, lookback: int):
        series = self._get(kind)
        if series is None:
            return np.array([], dtype=np.int64), np.array([])
        sl = series.window(end - lookback, end)
        return series.times[sl], series.values[sl]

    def latest(self, kind: EventKind, end: int, lookback: int) -> Any:
        values = self.window_values(kind, end, lookback)
        if len(values) == 0:
            return MISSING
        return values[-1]

    def hourly(self, kind: EventKind, hour: int) -> Any:
        """Hourly score at `hour`: the latest event in ((hour - 1) * 60, hour * 60]."""
        value = self.latest(kind, hour * MINUTES_PER_HOUR, MINUTES_PER_HOUR)
        return MISSING if value is MISSING else int(value)

    def hourly_series(self, kind: EventKind, first_hour: int, last_hour: int) -> List[int]:
        """Hourly scores for first_hour..last_hour inclusive, skipping hours with no value."""
        out = []
        for hour in range(first_hour, last_hour + 1):
            value = self.hourly(kind, hour)
            if value is not MISSING:
                out.append(value)
        return out

    @property
    def last_hour(self) -> int:
        return self.last_time // MINUTES_PER_HOUR


def map_minute_grid(times: np.ndarray, values: np.ndarray, end: int) -> pd.Series:
    """
    Carry-forward MAP over the minutes end-59 .. end.

    A reading at minute m covers m until the next reading; minutes before the
    first in-window reading stay NaN (uncovered).
    """
    grid = pd.RangeIndex(end - MINUTES_PER_HOUR + 1, end + 1)
    if len(times) == 0:
        return pd.Series(np.nan, index=grid)
    readings = pd.Series(values, index=pd.Index(times.astype(np.int64)))
    return readings.reindex(grid).ffill()


def _as_number(value: Any) -> Any:
    if value is MISSING:
        return MISSING
    return float(value)


def window_aggregate(
    events: Union[pd.DataFrame, StayTimeline, List[EventRecord]],
    stay_id: str,
    t_eval: int,
) -> Dict[str, Any]:
    """
    Compute all 22 features for (stay_id, t_eval).

    `events` may be a prepared StayTimeline, a frame, or a list of records.
    Frames and record lists must already be sorted by time within the stay.
    """
    timeline = _timeline_for(events, stay_id)
    end = t_eval * MINUTES_PER_HOUR
    features: Dict[str, Any] = {}

    pain = timeline.window_values(EventKind.PAIN, end, LOOKBACK["bedside"])
    features["pain_max_last1h"] = int(pain.max()) if len(pain) else MISSING

    rass = timeline.window_values(EventKind.RASS, end, LOOKBACK["bedside"])
    features["rass_window_last1h"] = (
        RassWindow(max=int(rass.max()), min=int(rass.min()), n=int(len(rass))) if len(rass) else MISSING
    )

    hr = timeline.window_values(EventKind.HR, end, LOOKBACK["hr"])
    features["hr_median_last1h"] = float(np.median(hr)) if len(hr) else MISSING

    map_times, map_values = timeline.window_points(EventKind.MAP, end, LOOKBACK["map"])
    features["map_median_last1h"] = float(np.median(map_values)) if len(map_values) else MISSING
    grid = map_minute_grid(map_times, map_values.astype(float), end)
    covered = int(grid.notna().sum())
    for thr in MAP_LOW_THRESHOLDS:
        key = f"map_low_minutes_last1h_thr{thr}"
        features[key] = int((grid < thr).sum()) if len(map_values) else MISSING
    features["has_map_coverage_last1h"] = bool(len(map_values) > 0)

    for name in ("sofa_total", "sofa_cardiovascular"):
        features[name] = timeline.hourly(SOFA_FEATURE_KINDS[name], t_eval)

    features["map_covered_minutes_last1h"] = covered
    features["lactate_latest_6h"] = _as_number(timeline.latest(EventKind.LACTATE, end, LOOKBACK["lactate"]))

    urine = timeline.window_values(EventKind.URINE_RATE, end, LOOKBACK["urine"])
    features["urine_output_mlkghr_6h"] = float(np.mean(urine)) if len(urine) else MISSING

    norepi = timeline.window_values(EventKind.NOREPI_EQ, end, LOOKBACK["norepi"])
    features["norepi_eq_dose_max_1h"] = float(norepi.max()) if len(norepi) else MISSING

    for name in ("sofa_resp", "sofa_coag", "sofa_liver", "sofa_cns", "sofa_renal"):
        features[name] = timeline.hourly(SOFA_FEATURE_KINDS[name], t_eval)

    features["spo2_latest_1h"] = _as_number(timeline.latest(EventKind.SPO2, end, LOOKBACK["spo2"]))
    features["temperature_latest_4h"] = _as_number(timeline.latest(EventKind.TEMP, end, LOOKBACK["temperature"]))
    features["wbc_latest_24h"] = _as_number(timeline.latest(EventKind.WBC, end, LOOKBACK["wbc"]))

    rhythm = timeline.latest(EventKind.RHYTHM, end, LOOKBACK["rhythm"])
    features["rhythm_recent_6h"] = rhythm if rhythm is MISSING else str(rhythm)

    return {name: features[name] for name in FEATURE_NAMES}


def _timeline_for(events, stay_id: str) -> StayTimeline:
    if isinstance(events, StayTimeline):
        return events
    if isinstance(events, pd.DataFrame):
        return StayTimeline(stay_id, events[events["stay_id"] == stay_id])
    records = [r for r in events if r.stay_id == stay_id]
    times = [r.time for r in records]
    if any(b < a for a, b in zip(times, times[1:])):
        raise IngestionError(f"events for stay {stay_id} are not sorted by time")
    return StayTimeline(stay_id, events_frame(records))
