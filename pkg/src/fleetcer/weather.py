"""Gridded-forecast weather enrichment and iceOnRoad derivation.

Forecast files are plain-text grids on a 0.5 degree lattice.  Four files
cover a day (reference times 00:00/06:00/12:00/18:00); each file's values
are valid three hours after its reference time.  Lookups pick the file
whose valid time is nearest to the record timestamp, breaking ties toward
the earlier one, and keep a bounded LRU cache of parsed files.
"""

from __future__ import annotations

import math
import re
from bisect import bisect_left
from collections import OrderedDict
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .core import EventInstance

VALID_OFFSET_S = 3 * 3600  # forecast values are valid 3h after the reference time
GRID_RESOLUTION = 0.5

RECORD_COLUMNS = [
    "id", "timestamp", "lon", "lat", "speed",
    "abrupt_accel", "abrupt_decel", "abrupt_corner", "fuel_level",
]


@dataclass(frozen=True, slots=True)
class VehicleRecord:
    id: str
    lon: float
    lat: float
    t: int
    speed: float = 0.0
    abrupt_accel: bool = False
    abrupt_decel: bool = False
    abrupt_corner: bool = False
    fuel_level: float | None = None


def parse_timestamp(value) -> int | None:
    """Epoch seconds from an integer or an ISO-8601 string; None if invalid."""
    if value is None:
        return None
    if isinstance(value, (int, float)):
        if math.isnan(value) if isinstance(value, float) else False:
            return None
        t = int(value)
        return t if t >= 0 else None
    text = str(value).strip()
    if not text:
        return None
    try:
        t = int(text)
        return t if t >= 0 else None
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        return None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    t = int(dt.timestamp())
    return t if t >= 0 else None


def validate_record(row: dict) -> VehicleRecord | str:
    """Build a VehicleRecord, or return a rejection reason string."""

    def _num(key):
        v = row.get(key)
        if v is None or (isinstance(v, float) and math.isnan(v)) or str(v).strip() == "":
            return None
        try:
            return float(v)
        except (TypeError, ValueError):
            return None

    vid = str(row.get("id", "")).strip()
    if not vid or vid == "nan":
        return "missing vehicle id"
    lon, lat = _num("lon"), _num("lat")
    if lon is None or not -180.0 <= lon <= 180.0:
        return "invalid longitude"
    if lat is None or not -90.0 <= lat <= 90.0:
        return "invalid latitude"
    t = parse_timestamp(row.get("timestamp"))
    if t is None:
        return "invalid timestamp"
    flags = [bool(_num(k)) for k in ("abrupt_accel", "abrupt_decel", "abrupt_corner")]
    return VehicleRecord(
        vid, lon, lat, t,
        speed=_num("speed") or 0.0,
        abrupt_accel=flags[0], abrupt_decel=flags[1], abrupt_corner=flags[2],
        fuel_level=_num("fuel_level"),
    )


# ---------------------------------------------------------------------------
# grid files
# ---------------------------------------------------------------------------

@dataclass
class GridFile:
    reference_time: int
    resolution: float
    attributes: tuple[str, ...]
    cells: dict[tuple[int, int], tuple[float, ...]]

    @property
    def valid_time(self) -> int:
        return self.reference_time + VALID_OFFSET_S


def cell_of(lon: float, lat: float, resolution: float = GRID_RESOLUTION) -> tuple[int, int]:
    return math.floor(lon / resolution), math.floor(lat / resolution)


def write_grid_file(path, reference_time: int, attributes, cells,
                    resolution: float = GRID_RESOLUTION) -> None:
    attributes = tuple(attributes)
    with open(path, "w") as f:
        f.write(f"reference_time={reference_time}\n")
        f.write(f"resolution={resolution}\n")
        f.write("attributes=" + ",".join(attributes) + "\n")
        f.write("ix,iy," + ",".join(attributes) + "\n")
        for (ix, iy), values in sorted(cells.items()):
            f.write(f"{ix},{iy}," + ",".join(str(v) for v in values) + "\n")


def _read_header(path) -> dict:
    header = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                break
            k, v = line.split("=", 1)
            header[k.strip()] = v.strip()
    return header


def read_grid_file(path) -> GridFile:
    header = {}
    cells = {}
    attributes: tuple[str, ...] = ()
    with open(path) as f:
        in_cells = False
        for line in f:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if not in_cells:
                if "=" in line:
                    k, v = line.split("=", 1)
                    header[k.strip()] = v.strip()
                    continue
                in_cells = True  # column header line
                attributes = tuple(line.split(",")[2:])
                continue
            parts = line.split(",")
            cells[(int(parts[0]), int(parts[1]))] = tuple(float(x) for x in parts[2:])
    ref = parse_timestamp(header.get("reference_time"))
    if ref is None:
        raise ValueError(f"{path}: missing or invalid reference_time")
    declared = header.get("attributes")
    if declared:
        attributes = tuple(a.strip() for a in declared.split(","))
    return GridFile(ref, float(header.get("resolution", GRID_RESOLUTION)),
                    attributes, cells)


class WeatherStore:
    """Forecast-file index plus a bounded handle cache with hit/miss counters."""

    def __init__(self, paths, cache_size: int = 8):
        refs = []
        for path in paths:
            ref = parse_timestamp(_read_header(path).get("reference_time"))
            if ref is None:
                raise ValueError(f"{path}: missing or invalid reference_time")
            refs.append((ref + VALID_OFFSET_S, ref, Path(path)))
        refs.sort()
        self._valid_times = [v for v, _, _ in refs]
        self._files = refs
        self._cache: OrderedDict[Path, GridFile] = OrderedDict()
        self.cache_size = cache_size
        self.hits = 0
        self.misses = 0

    @classmethod
    def from_dir(cls, directory, cache_size: int = 8, pattern: str = "*.grid"):
        paths = sorted(Path(directory).glob(pattern))
        return cls(paths, cache_size=cache_size)

    def __len__(self) -> int:
        return len(self._files)

    @property
    def hit_ratio(self) -> float:
        total = self.hits + self.misses
        return self.hits / total if total else 0.0

    def nearest_forecast(self, t: int) -> Path:
        """Path of the file whose valid time is nearest t (ties -> earlier)."""
        if not self._files:
            raise ValueError("weather store is empty")
        i = bisect_left(self._valid_times, t)
        if i == 0:
            return self._files[0][2]
        if i == len(self._valid_times):
            return self._files[-1][2]
        before, after = self._valid_times[i - 1], self._valid_times[i]
        return self._files[i - 1][2] if t - before <= after - t else self._files[i][2]

    def _open(self, path: Path) -> GridFile:
        grid = self._cache.get(path)
        if grid is not None:
            self.hits += 1
            self._cache.move_to_end(path)
            return grid
        self.misses += 1
        grid = read_grid_file(path)
        self._cache[path] = grid
        while len(self._cache) > self.cache_size:
            self._cache.popitem(last=False)
        return grid

    def lookup(self, lon: float, lat: float, t: int) -> dict[str, float] | None:
        """Weather attributes for the cell containing (lon, lat) at time t.

        None when the cell is outside the nearest file's coverage.
        """
        grid = self._open(self.nearest_forecast(t))
        values = grid.cells.get(cell_of(lon, lat, grid.resolution))
        if values is None:
            return None
        return dict(zip(grid.attributes, values))


# ---------------------------------------------------------------------------
# ice predicate
# ---------------------------------------------------------------------------

DEFAULT_ICE_PREDICATE = "iceCover>0,surfaceTemperature<=0"

_COND_RE = re.compile(r"^\s*(\w+)\s*(<=|>=|<|>|==)\s*(-?\d+(?:\.\d+)?)\s*$")
_COND_OPS = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
}


class IcePredicate:
    """Conjunction of attribute comparisons, e.g. 'iceCover>0,surfaceTemperature<=0'."""

    def __init__(self, spec: str = DEFAULT_ICE_PREDICATE):
        self.spec = spec
        self._conds = []
        for part in spec.split(","):
            m = _COND_RE.match(part)
            if not m:
                raise ValueError(f"bad ice predicate condition {part!r}")
            self._conds.append((m.group(1), _COND_OPS[m.group(2)], float(m.group(3))))

    def attributes(self) -> set[str]:
        return {attr for attr, _, _ in self._conds}

    def __call__(self, attrs: dict[str, float]) -> bool:
        for attr, op, ref in self._conds:
            value = attrs.get(attr)
            if value is None or not op(value, ref):
                return False
        return True


def derive_ice_event(
    rec: VehicleRecord, attrs: dict[str, float] | None, predicate: IcePredicate
) -> EventInstance | None:
    if attrs and predicate(attrs):
        return EventInstance("iceOnRoad", rec.id, rec.t, rec.t)
    return None


# ---------------------------------------------------------------------------
# estimator wrapper
# ---------------------------------------------------------------------------

class WeatherEnricher(BaseEstimator, TransformerMixin):
    """Validate vehicle records and attach weather attributes.

    transform() drops rows failing spatio-temporal validation (counted in
    ``rejected_``) and appends one column per weather attribute plus a
    ``weather_ok`` flag.
    """

    def __init__(self, grid_dir=None, attributes=None, cache_size=8):
        self.grid_dir = grid_dir
        self.attributes = attributes
        self.cache_size = cache_size

    def fit(self, X=None, y=None):
        self.store_ = WeatherStore.from_dir(self.grid_dir, cache_size=self.cache_size)
        if self.attributes is not None:
            self.attributes_ = tuple(self.attributes)
        else:
            sample = read_grid_file(self.store_._files[0][2]) if len(self.store_) else None
            self.attributes_ = sample.attributes if sample else ()
        self.rejected_ = 0
        return self

    def transform(self, X: pd.DataFrame) -> pd.DataFrame:
        kept_rows = []
        for row in X.to_dict("records"):
            rec = validate_record(row)
            if isinstance(rec, str):
                self.rejected_ += 1
                continue
            attrs = self.store_.lookup(rec.lon, rec.lat, rec.t)
            row = dict(row)
            row["timestamp"] = rec.t
            row["weather_ok"] = attrs is not None
            for name in self.attributes_:
                row[name] = attrs.get(name) if attrs else None
            kept_rows.append(row)
        return pd.DataFrame(kept_rows)
