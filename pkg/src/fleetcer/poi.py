"""Grid-partitioned distance join against a static point-of-interest set.

POIs are replicated into every grid cell whose rectangle lies within the
distance threshold, so each vehicle record is joined against exactly one
cell and then refined with the true great-circle distance.  The
cell-membership test uses a local equirectangular approximation that can
only over-include candidates; the refine step removes them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin

from .core import EventInstance
from .weather import VehicleRecord

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEGREE = 2 * math.pi * EARTH_RADIUS_M / 360.0  # ~111,195 m

DEFAULT_THETA_M = 300.0
GAS_STATION = "gas_station"


@dataclass(frozen=True, slots=True)
class Poi:
    lon: float
    lat: float
    name: str
    poi_type: str


def haversine_m(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance in meters."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def default_cell_size_deg(theta_m: float, mean_lat: float) -> float:
    """Square cells sized so that theta spans one cell of longitude at mean_lat."""
    cos_lat = max(math.cos(math.radians(mean_lat)), 1e-6)
    return theta_m / (METERS_PER_DEGREE * cos_lat)


def _rect_min_distance_m(poi: Poi, ix: int, iy: int, cell_size: float) -> float:
    # distance from the POI to the nearest point of the cell rectangle,
    # clamping lon/lat independently (over-inclusive near cell corners)
    lon = min(max(poi.lon, ix * cell_size), (ix + 1) * cell_size)
    lat = min(max(poi.lat, iy * cell_size), (iy + 1) * cell_size)
    return haversine_m(poi.lon, poi.lat, lon, lat)


class GridIndex:
    """Cell-replicated POI index for distance joins with threshold theta."""

    # inflate the approximate rectangle distance so the equirectangular
    # clamp can never exclude a true candidate
    _SAFETY = 1.001

    def __init__(self, pois: list[Poi], theta_m: float, cell_size_deg: float | None = None):
        if theta_m < 0:
            raise ValueError("theta must be non-negative")
        self.theta_m = theta_m
        if cell_size_deg is None:
            mean_lat = sum(p.lat for p in pois) / len(pois) if pois else 0.0
            cell_size_deg = default_cell_size_deg(max(theta_m, 1.0), mean_lat)
        if cell_size_deg <= 0:
            raise ValueError("cell size must be positive")
        self.cell_size_deg = cell_size_deg
        self.n_pois = len(pois)
        self.cells: dict[tuple[int, int], list[Poi]] = {}
        margin = theta_m * self._SAFETY + 1.0
        for poi in pois:
            home = self.cell_of(poi.lon, poi.lat)
            lat_span = margin / METERS_PER_DEGREE
            cos_lat = max(math.cos(math.radians(poi.lat)), 1e-6)
            lon_span = margin / (METERS_PER_DEGREE * cos_lat)
            ix_lo = math.floor((poi.lon - lon_span) / cell_size_deg)
            ix_hi = math.floor((poi.lon + lon_span) / cell_size_deg)
            iy_lo = math.floor((poi.lat - lat_span) / cell_size_deg)
            iy_hi = math.floor((poi.lat + lat_span) / cell_size_deg)
            for ix in range(ix_lo, ix_hi + 1):
                for iy in range(iy_lo, iy_hi + 1):
                    if (ix, iy) == home or _rect_min_distance_m(
                        poi, ix, iy, cell_size_deg
                    ) <= margin:
                        self.cells.setdefault((ix, iy), []).append(poi)

    def cell_of(self, lon: float, lat: float) -> tuple[int, int]:
        return (
            math.floor(lon / self.cell_size_deg),
            math.floor(lat / self.cell_size_deg),
        )

    @property
    def replication_factor(self) -> float:
        if not self.n_pois:
            return 0.0
        return sum(len(v) for v in self.cells.values()) / self.n_pois

    @property
    def avg_pois_per_cell(self) -> float:
        if not self.cells:
            return 0.0
        return sum(len(v) for v in self.cells.values()) / len(self.cells)

    def candidates(self, lon: float, lat: float) -> list[Poi]:
        return self.cells.get(self.cell_of(lon, lat), [])

    def join(self, lon: float, lat: float) -> list[tuple[Poi, float]]:
        """All POIs within theta of (lon, lat), with their distances."""
        out = []
        for poi in self.candidates(lon, lat):
            d = haversine_m(lon, lat, poi.lon, poi.lat)
            if d <= self.theta_m:
                out.append((poi, d))
        return out


def distance_join(index: GridIndex, rec: VehicleRecord) -> list[tuple[Poi, float]]:
    return index.join(rec.lon, rec.lat)


def derive_close_to_gas(
    rec: VehicleRecord, joined: list[tuple[Poi, float]]
) -> EventInstance | None:
    """One closeToGas event when any joined POI is a gas station."""
    if any(p.poi_type == GAS_STATION for p, _ in joined):
        return EventInstance("closeToGas", rec.id, rec.t, rec.t)
    return None


def load_pois(source) -> list[Poi]:
    """POIs from a CSV with columns lon,lat,name,type."""
    df = source if isinstance(source, pd.DataFrame) else pd.read_csv(source)
    pois = []
    for row in df.itertuples(index=False):
        lon, lat = float(row.lon), float(row.lat)
        if not (-180.0 <= lon <= 180.0 and -90.0 <= lat <= 90.0):
            continue
        pois.append(Poi(lon, lat, str(row.name), str(row.type)))
    return pois


class PoiEnricher(BaseEstimator, TransformerMixin):
    """Attach nearby-POI information to vehicle records.

    fit() builds the replicated grid index from the POI set; transform()
    adds a ``poi_count`` column and, when a gas station joins, the
    ``nearest_gas_distance_m``.
    """

    def __init__(self, theta_m=DEFAULT_THETA_M, cell_size_deg=None):
        self.theta_m = theta_m
        self.cell_size_deg = cell_size_deg

    def fit(self, X, y=None):
        pois = X if isinstance(X, list) else load_pois(X)
        self.index_ = GridIndex(pois, self.theta_m, self.cell_size_deg)
        return self

    def transform(self, X: pd.DataFrame) -> pd.DataFrame:
        counts = []
        gas_dist = []
        for row in X.itertuples(index=False):
            joined = self.index_.join(float(row.lon), float(row.lat))
            counts.append(len(joined))
            dists = [d for p, d in joined if p.poi_type == GAS_STATION]
            gas_dist.append(min(dists) if dists else None)
        out = X.copy()
        out["poi_count"] = counts
        out["nearest_gas_distance_m"] = gas_dist
        return out
