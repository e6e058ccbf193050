"""
Synthetic ICU Event Generator

Produces per-stay event streams with the clinical shape of the benchmark:
calm bedside scores, intermittent MAP dips, hourly SOFA components (total =
sum of components) and a deteriorating phenotype whose SOFA climbs by two or
more points. Output is fully determined by the seed.
"""

import logging
from pathlib import Path
from typing import Dict, List, Tuple

from faker import Faker

from src.base.jsonl import write_jsonl
from src.cohort.events import EventKind, EventRecord

logger = logging.getLogger(__name__)

# ============================================================================
# PHENOTYPES
# ============================================================================

PHENOTYPES = [
    {
        "name": "stable",
        "weight": 0.55,
        "map_baseline": (70, 82),
        "hr_baseline": (70, 95),
        "dip_probability": 0.35,      # per hour
        "sofa_baseline_total": (1, 5),
        "deterioration": None,
    },
    {
        "name": "deteriorating",
        "weight": 0.45,
        "map_baseline": (64, 76),
        "hr_baseline": (85, 110),
        "dip_probability": 0.55,
        "sofa_baseline_total": (2, 7),
        "deterioration": {"rise": (2, 5), "ramp_hours": (2, 6)},
    },
]

# ============================================================================
# SAMPLING CADENCE (minutes between observations)
# ============================================================================

CADENCE = {
    EventKind.MAP: (5, 15),
    EventKind.HR: (10, 20),
    EventKind.SPO2: (15, 30),
    EventKind.PAIN: (45, 75),
    EventKind.RASS: (20, 60),
    EventKind.TEMP: (120, 240),
    EventKind.LACTATE: (240, 480),
    EventKind.URINE_RATE: (60, 60),
    EventKind.WBC: (720, 1440),
    EventKind.RHYTHM: (120, 240),
    EventKind.NOREPI_EQ: (30, 30),
}

RHYTHMS = ["SR", "ST", "SB", "AF"]

SOFA_COMPONENTS = [
    EventKind.SOFA_RESP, EventKind.SOFA_COAG, EventKind.SOFA_LIVER,
    EventKind.SOFA_CARDIO, EventKind.SOFA_CNS, EventKind.SOFA_RENAL,
]

# Components that worsen first in a deteriorating stay
WORSENING_ORDER = [EventKind.SOFA_CARDIO, EventKind.SOFA_RENAL, EventKind.SOFA_RESP, EventKind.SOFA_COAG]


class SyntheticStayGenerator:
    def __init__(self, seed: int):
        self.fake = Faker()
        self.fake.seed_instance(seed)
        self.rng = self.fake.random
        self.hours_range: Tuple[int, int] = (24, 72)

    def _stay_id(self, used: set) -> str:
        while True:
            candidate = self.fake.bothify("S########")
            if candidate not in used:
                used.add(candidate)
                return candidate

    def _phenotype(self) -> dict:
        roll = self.rng.random()
        acc = 0.0
        for p in PHENOTYPES:
            acc += p["weight"]
            if roll < acc:
                return p
        return PHENOTYPES[-1]

    def _times(self, kind: EventKind, end: int, start: int = 0) -> List[int]:
        lo, hi = CADENCE[kind]
        t = start + self.rng.randint(0, hi)
        out = []
        while t <= end:
            out.append(t)
            t += self.rng.randint(lo, hi)
        return out

    def _sofa_plan(self, phenotype: dict, hours: int) -> Tuple[Dict[EventKind, List[int]], List[int]]:
        """Hourly component scores for hours 1..hours."""
        base_total = self.rng.randint(*phenotype["sofa_baseline_total"])
        base = {k: 0 for k in SOFA_COMPONENTS}
        for _ in range(base_total):
            k = self.rng.choice(SOFA_COMPONENTS)
            if base[k] < 3:
                base[k] += 1

        plan = {k: [base[k]] * hours for k in SOFA_COMPONENTS}
        det = phenotype["deterioration"]
        if det and hours > 4:
            onset = self.rng.randint(2, max(2, hours - 2))
            rise = self.rng.randint(*det["rise"])
            ramp = self.rng.randint(*det["ramp_hours"])
            for step in range(rise):
                k = WORSENING_ORDER[step % len(WORSENING_ORDER)]
                hour = min(hours - 1, onset + (step * ramp) // max(rise, 1))
                for h in range(hour, hours):
                    plan[k][h] = min(4, plan[k][h] + 1)

        # Small hour-to-hour jitter on one component
        for h in range(hours):
            if self.rng.random() < 0.08:
                k = self.rng.choice(SOFA_COMPONENTS)
                plan[k][h] = max(0, min(4, plan[k][h] + self.rng.choice([-1, 1])))

        totals = [sum(plan[k][h] for k in SOFA_COMPONENTS) for h in range(hours)]
        return plan, totals

    def generate_stay(self, stay_id: str) -> List[EventRecord]:
        phenotype = self._phenotype()
        hours = self.rng.randint(*self.hours_range)
        end = hours * 60
        events: List[EventRecord] = []

        def add(time: int, kind: EventKind, value) -> None:
            events.append(EventRecord(stay_id=stay_id, time=time, kind=kind, value=value))

        plan, totals = self._sofa_plan(phenotype, hours)
        for h in range(hours):
            t = (h + 1) * 60 - self.rng.randint(0, 20)
            for k in SOFA_COMPONENTS:
                add(t, k, plan[k][h])
            add(t, EventKind.SOFA_TOTAL, totals[h])

        # MAP with intermittent dips
        map_base = self.rng.uniform(*phenotype["map_baseline"])
        dip_windows = []
        for h in range(hours):
            if self.rng.random() < phenotype["dip_probability"]:
                start = h * 60 + self.rng.randint(0, 50)
                dip_windows.append((start, start + self.rng.randint(8, 45), self.rng.uniform(52, 64)))
        for t in self._times(EventKind.MAP, end):
            value = map_base + self.rng.gauss(0, 3)
            for start, stop, level in dip_windows:
                if start <= t < stop:
                    value = level + self.rng.gauss(0, 1.5)
                    break
            add(t, EventKind.MAP, round(value))

        hr_base = self.rng.uniform(*phenotype["hr_baseline"])
        for t in self._times(EventKind.HR, end):
            add(t, EventKind.HR, round(hr_base + self.rng.gauss(0, 6)))

        for t in self._times(EventKind.SPO2, end):
            add(t, EventKind.SPO2, round(min(100.0, self.rng.gauss(95, 2.5)), 1))

        # Bedside: mostly calm, occasional pain or agitation
        for t in self._times(EventKind.PAIN, end):
            add(t, EventKind.PAIN, 0 if self.rng.random() < 0.85 else self.rng.randint(1, 6))
        for t in self._times(EventKind.RASS, end):
            roll = self.rng.random()
            if roll < 0.85:
                value = self.rng.randint(-2, 0)
            elif roll < 0.93:
                value = self.rng.randint(-4, -3)
            else:
                value = self.rng.randint(1, 2)
            add(t, EventKind.RASS, value)

        deteriorating = phenotype["deterioration"] is not None
        for t in self._times(EventKind.TEMP, end):
            add(t, EventKind.TEMP, round(self.rng.gauss(37.6 if deteriorating else 37.0, 0.5), 1))
        for t in self._times(EventKind.LACTATE, end):
            add(t, EventKind.LACTATE, round(max(0.4, self.rng.gauss(2.3 if deteriorating else 1.3, 0.6)), 1))
        for t in self._times(EventKind.URINE_RATE, end):
            add(t, EventKind.URINE_RATE, round(max(0.0, self.rng.gauss(0.55 if deteriorating else 0.9, 0.25)), 2))
        for t in self._times(EventKind.WBC, end):
            add(t, EventKind.WBC, round(max(1.0, self.rng.gauss(13.0 if deteriorating else 9.0, 2.5)), 1))
        for t in self._times(EventKind.RHYTHM, end):
            weights = [0.55, 0.3, 0.05, 0.1] if deteriorating else [0.8, 0.1, 0.07, 0.03]
            add(t, EventKind.RHYTHM, self.rng.choices(RHYTHMS, weights=weights)[0])

        if deteriorating and self.rng.random() < 0.6:
            start = self.rng.randint(0, max(0, end - 120))
            for t in self._times(EventKind.NOREPI_EQ, end, start=start):
                add(t, EventKind.NOREPI_EQ, round(self.rng.uniform(0.02, 0.3), 2))

        return events

    def generate(self, n_stays: int, hours_range: Tuple[int, int] = (24, 72)) -> List[EventRecord]:
        self.hours_range = hours_range
        used: set = set()
        events: List[EventRecord] = []
        for _ in range(n_stays):
            events.extend(self.generate_stay(self._stay_id(used)))
        events.sort(key=lambda e: (e.stay_id, e.time))
        logger.info(f"🧪 Generated {len(events)} events for {n_stays} synthetic stays")
        return events


def generate_events(n_stays: int, seed: int, hours_range: Tuple[int, int] = (24, 72)) -> List[EventRecord]:
    return SyntheticStayGenerator(seed).generate(n_stays, hours_range)


def write_events(path: Path, events: List[EventRecord]) -> int:
    return write_jsonl(path, (e.to_row() for e in events))
