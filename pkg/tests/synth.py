"""Synthetic streams for recognizer and pipeline tests."""

import random

from fleetcer.core import EventInstance

BASE = 1_546_300_800  # 2019-01-01 00:00:00 UTC


def make_event_stream(
    n_events: int,
    n_vehicles: int = 10,
    seed: int = 0,
    start: int = BASE,
    horizon_s: int = 2 * 24 * 3600,
) -> list[EventInstance]:
    """Occurrence-sorted input events with speed walks crossing the limit.

    Roughly one record per vehicle per tick; records emit moving/stopped
    plus occasional accelerometer, fuel and enrichment events.
    """
    rng = random.Random(seed)
    speeds = {f"v{i:02d}": rng.uniform(40, 120) for i in range(n_vehicles)}
    fuels = {v: rng.uniform(20, 60) for v in speeds}
    events: list[EventInstance] = []
    n_records = n_events  # upper bound; each record emits >= 1 event
    for i in range(n_records):
        if len(events) >= n_events:
            break
        t = start + (i * horizon_s) // n_records
        v = f"v{rng.randrange(n_vehicles):02d}"
        speed = max(0.0, min(150.0, speeds[v] + rng.gauss(0, 12)))
        if rng.random() < 0.05:
            speed = 0.0
        speeds[v] = speed
        if speed > 0:
            events.append(EventInstance("moving", v, t, t, (round(speed, 1),)))
        else:
            events.append(EventInstance("stopped", v, t, t))
        r = rng.random()
        if r < 0.04:
            events.append(EventInstance("abruptAcceleration", v, t, t))
        elif r < 0.08:
            events.append(EventInstance("abruptDeceleration", v, t, t))
        elif r < 0.12:
            events.append(EventInstance("abruptCornering", v, t, t))
        elif r < 0.15:
            events.append(EventInstance("iceOnRoad", v, t, t))
        if rng.random() < 0.10:
            fuels[v] = max(5.0, fuels[v] - rng.uniform(0, 2)) if rng.random() < 0.8 \
                else rng.uniform(40, 60)
            events.append(EventInstance("fuelLevel", v, t, t, (round(fuels[v], 1),)))
        if rng.random() < 0.05:
            events.append(EventInstance("closeToGas", v, t, t))
    events = events[:n_events]
    events.sort(key=lambda e: (e.occurrence, e.vehicle, e.event_type))
    return events


def make_vehicle_rows(
    n_rows: int,
    n_vehicles: int = 5,
    seed: int = 0,
    start: int = BASE,
    horizon_s: int = 24 * 3600,
    lon_range=(23.0, 24.5),
    lat_range=(37.5, 38.4),
) -> list[dict]:
    """Raw vehicle CSV rows (temporally sorted) for pipeline-level tests."""
    rng = random.Random(seed)
    rows = []
    for i in range(n_rows):
        t = start + (i * horizon_s) // n_rows
        rows.append({
            "id": f"v{rng.randrange(n_vehicles):02d}",
            "timestamp": t,
            "lon": round(rng.uniform(*lon_range), 5),
            "lat": round(rng.uniform(*lat_range), 5),
            "speed": round(max(0.0, rng.gauss(80, 25)), 1),
            "abrupt_accel": int(rng.random() < 0.05),
            "abrupt_decel": int(rng.random() < 0.05),
            "abrupt_corner": int(rng.random() < 0.05),
            "fuel_level": round(rng.uniform(5, 60), 1) if rng.random() < 0.2 else "",
        })
    return rows
