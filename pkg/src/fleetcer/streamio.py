"""Dataset parsing, timestamp-ordered replay and artificial delay injection.

Delays model transport lateness: a seeded uniform selection of events gets
``arrival = occurrence + Gamma(k=2, scale=2) * unit_scale`` seconds; the
default unit scale of 2 hours puts the mean delay at about 8 hours.
"""

from __future__ import annotations

import csv
import math
import random
import time
from dataclasses import dataclass

import pandas as pd

from .core import EventInstance
from .weather import IcePredicate, VehicleRecord

GAMMA_SHAPE = 2
GAMMA_SCALE = 2.0
DEFAULT_UNIT_SCALE_S = 7200  # seconds per Gamma unit; mean delay = 2*2*7200s = 8h

EVENT_CSV_HEADER = ["event_type", "vehicle", "occurrence_ts", "arrival_ts", "arg1", "arg2"]


@dataclass(frozen=True)
class DelayConfig:
    fraction: float
    seed: int = 0
    unit_scale_s: int = DEFAULT_UNIT_SCALE_S
    gamma_shape: int = GAMMA_SHAPE
    gamma_scale: float = GAMMA_SCALE

    def __post_init__(self):
        if not 0.0 <= self.fraction <= 1.0:
            raise ValueError("fraction must be within [0, 1]")
        if self.gamma_shape <= 0 or self.gamma_scale <= 0 or self.unit_scale_s <= 0:
            raise ValueError("gamma shape, scale and unit scale must be positive")

    @property
    def mean_delay_s(self) -> float:
        return self.gamma_shape * self.gamma_scale * self.unit_scale_s


def record_to_events(rec: VehicleRecord, ice: bool = False, close_to_gas: bool = False
                     ) -> list[EventInstance]:
    """Input events carried by one enriched vehicle record."""
    t = rec.t
    events = []
    if rec.speed > 0:
        events.append(EventInstance("moving", rec.id, t, t, (rec.speed,)))
    else:
        events.append(EventInstance("stopped", rec.id, t, t))
    if rec.abrupt_accel:
        events.append(EventInstance("abruptAcceleration", rec.id, t, t))
    if rec.abrupt_decel:
        events.append(EventInstance("abruptDeceleration", rec.id, t, t))
    if rec.abrupt_corner:
        events.append(EventInstance("abruptCornering", rec.id, t, t))
    if rec.fuel_level is not None:
        events.append(EventInstance("fuelLevel", rec.id, t, t, (rec.fuel_level,)))
    if ice:
        events.append(EventInstance("iceOnRoad", rec.id, t, t))
    if close_to_gas:
        events.append(EventInstance("closeToGas", rec.id, t, t))
    return events


def frame_to_events(df: pd.DataFrame, ice_predicate: IcePredicate | None = None
                    ) -> list[EventInstance]:
    """Events for every row of an enriched record frame, occurrence-sorted.

    iceOnRoad fires when the row's weather attributes satisfy the
    predicate; closeToGas when the POI join reported a gas station.
    """
    predicate = ice_predicate or IcePredicate()
    events: list[EventInstance] = []
    has_gas = "nearest_gas_distance_m" in df.columns
    for row in df.to_dict("records"):
        rec = VehicleRecord(
            str(row["id"]), float(row["lon"]), float(row["lat"]),
            int(row["timestamp"]),
            speed=_f(row.get("speed")) or 0.0,
            abrupt_accel=bool(_f(row.get("abrupt_accel"))),
            abrupt_decel=bool(_f(row.get("abrupt_decel"))),
            abrupt_corner=bool(_f(row.get("abrupt_corner"))),
            fuel_level=_f(row.get("fuel_level")),
        )
        ice = bool(row.get("weather_ok")) and predicate(
            {a: _f(row.get(a)) for a in predicate.attributes()}
        )
        gas = has_gas and _f(row.get("nearest_gas_distance_m")) is not None
        events.extend(record_to_events(rec, ice=ice, close_to_gas=gas))
    events.sort(key=lambda e: (e.occurrence, e.vehicle, e.event_type))
    return events


def _f(value) -> float | None:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return None
    if isinstance(value, str) and not value.strip():
        return None
    return float(value)


def inject_delays(events: list[EventInstance], cfg: DelayConfig) -> list[EventInstance]:
    """Delay a seeded uniform selection of events; output is arrival-sorted.

    Each event is selected independently with probability cfg.fraction; the
    delay magnitude is a Gamma(k, scale) sample (sum of k exponentials,
    exact for integer shape) times the unit scale, rounded to seconds.
    """
    rng = random.Random(cfg.seed)
    out = []
    for e in events:
        if cfg.fraction > 0 and rng.random() < cfg.fraction:
            units = -sum(
                math.log(1.0 - rng.random()) for _ in range(cfg.gamma_shape)
            ) * cfg.gamma_scale
            delay = round(units * cfg.unit_scale_s)
            e = EventInstance(e.event_type, e.vehicle, e.occurrence,
                              e.occurrence + delay, e.args)
        out.append(e)
    out.sort(key=lambda e: (e.arrival, e.occurrence, e.vehicle, e.event_type))
    return out


@dataclass
class ReplayStats:
    delivered: int = 0
    wall_clock_s: float = 0.0


def replay(events, sink, pacing: float = 0.0) -> ReplayStats:
    """Deliver arrival-ordered events to sink(event).

    pacing > 0 sleeps `pacing` seconds per second of arrival-time gap;
    0 replays as fast as possible.
    """
    stats = ReplayStats()
    t0 = time.perf_counter()
    prev_arrival = None
    for e in events:
        if pacing > 0 and prev_arrival is not None and e.arrival > prev_arrival:
            time.sleep((e.arrival - prev_arrival) * pacing)
        prev_arrival = e.arrival
        sink(e)
        stats.delivered += 1
    stats.wall_clock_s = time.perf_counter() - t0
    return stats


# ---------------------------------------------------------------------------
# event CSV
# ---------------------------------------------------------------------------

def write_events_csv(events, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(EVENT_CSV_HEADER)
        for e in events:
            args = list(e.args) + [""] * (2 - len(e.args))
            w.writerow([e.event_type, e.vehicle, e.occurrence, e.arrival, *args[:2]])


def read_events_csv(path) -> list[EventInstance]:
    events = []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            return events
        for row in reader:
            args = tuple(float(a) for a in row[4:6] if a != "")
            events.append(
                EventInstance(row[0], row[1], int(row[2]), int(row[3]), args)
            )
    return events
