#!/usr/bin/env python3
"""Regenerate sample_data/: a 20-record two-vehicle scenario that exercises
speeding, harsh cornering on ice and a low-fuel pass near a gas station.

The expected recognition output is committed at
tests/data/golden_intervals.csv; rerun tests/test_acceptance.py after
changing anything here.
"""

import csv
from pathlib import Path

from fleetcer.patterns import builtin_patterns_text
from fleetcer.weather import write_grid_file

BASE = 1_546_300_800  # 2019-01-01 00:00:00 UTC, a multiple of 3600

ROOT = Path(__file__).resolve().parent.parent / "sample_data"

# lon/lat picked per 0.5-degree weather cell:
#   (46, 75) plain road, (47, 75) icy road, (48, 75) gas-station area
PLAIN = (23.20, 37.90)
ICY = (23.70, 37.90)
GAS_AREA = (24.2003, 37.90021)
GAS_STATION = (24.2000, 37.9000)

ROWS = [
    # id, dt, lon/lat, speed, accel, decel, corner, fuel
    ("v1", 300, PLAIN, 80, 0, 0, 0, ""),
    ("v1", 600, PLAIN, 100, 0, 0, 0, ""),
    ("v1", 900, ICY, 110, 0, 0, 1, ""),
    ("v1", 1200, PLAIN, 105, 0, 0, 0, ""),
    ("v1", 1500, GAS_AREA, 95, 0, 0, 0, 25),
    ("v1", 1800, PLAIN, 85, 0, 0, 0, ""),
    ("v1", 2100, PLAIN, 0, 0, 0, 0, ""),
    ("v1", 2400, PLAIN, 70, 0, 0, 0, 45),
    ("v1", 2700, PLAIN, 120, 0, 0, 0, ""),
    ("v1", 3000, PLAIN, 115, 1, 0, 0, ""),
    ("v1", 3300, PLAIN, 50, 0, 0, 0, ""),
    ("v2", 400, PLAIN, 70, 0, 0, 0, ""),
    ("v2", 700, PLAIN, 95, 0, 0, 0, ""),
    ("v2", 1000, PLAIN, 95, 0, 1, 0, ""),
    ("v2", 1300, PLAIN, 40, 0, 0, 0, ""),
    ("v2", 1600, PLAIN, 0, 0, 0, 0, ""),
    ("v2", 1900, PLAIN, 0, 0, 0, 0, 20),
    ("v2", 2200, PLAIN, 60, 0, 0, 0, ""),
    ("v2", 2500, (24.2001, 37.9001), 88, 0, 0, 0, 25),
    ("v2", 2800, PLAIN, 30, 0, 0, 0, ""),
]


def main():
    ROOT.mkdir(exist_ok=True)
    with open(ROOT / "vehicles.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["id", "timestamp", "lon", "lat", "speed",
                    "abrupt_accel", "abrupt_decel", "abrupt_corner", "fuel_level"])
        for vid, dt, (lon, lat), speed, a, d, c, fuel in ROWS:
            w.writerow([vid, BASE + dt, lon, lat, speed, a, d, c, fuel])

    with open(ROOT / "pois.csv", "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["lon", "lat", "name", "type"])
        w.writerow([*GAS_STATION, "Sample Gas", "gas_station"])
        w.writerow([24.2002, 37.9001, "Corner Pharmacy", "pharmacy"])
        w.writerow([23.95, 37.70, "Far Cafe", "cafe"])

    weather_dir = ROOT / "weather"
    weather_dir.mkdir(exist_ok=True)
    cells = {
        (46, 75): (5.0, 0.0),
        (47, 75): (-2.0, 0.4),
        (48, 75): (3.0, 0.0),
    }
    for k in range(4):  # 00:00 / 06:00 / 12:00 / 18:00 reference times
        write_grid_file(
            weather_dir / f"forecast_{k:02d}.grid",
            BASE + k * 6 * 3600,
            ("surfaceTemperature", "iceCover"),
            cells,
        )

    with open(ROOT / "thresholds.csv", "w", newline="") as f:
        f.write("vehicle,param,value\n*,speed,90\n*,fuel,60\n")

    (ROOT / "patterns.txt").write_text(builtin_patterns_text())
    print(f"sample data written to {ROOT}")


if __name__ == "__main__":
    main()
