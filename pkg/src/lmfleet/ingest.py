"""Build instances from raw trip records.

Pipeline: keep trips whose drop-off falls in a square around each station,
cluster their destinations into last-mile stops, count passengers per
(headway interval, stop), and enumerate candidate routes over the stops.

Distances use an equirectangular projection around each station, which is
accurate to well under a percent at the one-mile scale involved.
"""

from __future__ import annotations

import csv
import itertools
import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .domain import CostParams, DemandScenario, Instance, RegionSpec, RouteSpec

log = logging.getLogger(__name__)

EARTH_RADIUS_MILES = 3958.8
DEFAULT_SPEED_MPH = 12.0
MAX_ROUTE_STOPS = 8


@dataclass(frozen=True)
class TripRecord:
    dropoff_time: datetime
    dropoff_lat: float
    dropoff_lon: float
    passenger_count: int = 1


@dataclass(frozen=True)
class StationSpec:
    lat: float
    lon: float
    half_width_miles: float = 0.5
    name: str = ""

    def __post_init__(self):
        if not self.half_width_miles > 0:
            raise ValueError("half_width_miles must be > 0")


@dataclass(frozen=True)
class TripSchema:
    """Column names of a trip CSV and the timestamp format."""

    time: str = "dropoff_datetime"
    lat: str = "dropoff_latitude"
    lon: str = "dropoff_longitude"
    passengers: str = "passenger_count"
    time_format: str | None = None  # None: ISO 8601


@dataclass
class LoadResult:
    trips: list[TripRecord]
    skipped: int = 0
    skipped_rows: list[int] = field(default_factory=list)


def project(lat, lon, origin_lat: float, origin_lon: float) -> np.ndarray:
    """Equirectangular (x east, y north) coordinates in miles relative to the origin."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    x = np.radians(lon - origin_lon) * math.cos(math.radians(origin_lat)) * EARTH_RADIUS_MILES
    y = np.radians(lat - origin_lat) * EARTH_RADIUS_MILES
    return np.stack([x, y], axis=-1)


def load_trips(path: str | Path, schema: TripSchema = TripSchema()) -> LoadResult:
    """Parse a trip CSV. Malformed rows are skipped and tallied; missing columns raise."""
    path = Path(path)
    trips: list[TripRecord] = []
    skipped: list[int] = []
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return LoadResult([], 0, [])
        needed = [schema.time, schema.lat, schema.lon, schema.passengers]
        missing = [c for c in needed if c not in reader.fieldnames]
        if missing:
            raise ValueError(f"{path}: missing columns {missing}")
        for lineno, row in enumerate(reader, start=2):
            try:
                trips.append(_parse_row(row, schema))
            except (ValueError, TypeError):
                skipped.append(lineno)
    if skipped:
        log.info("%s: skipped %d malformed rows", path, len(skipped))
    return LoadResult(trips, len(skipped), skipped)


def _parse_row(row: dict, schema: TripSchema) -> TripRecord:
    raw_t = row[schema.time].strip()
    t = datetime.strptime(raw_t, schema.time_format) if schema.time_format else datetime.fromisoformat(raw_t)
    lat = float(row[schema.lat])
    lon = float(row[schema.lon])
    pc = int(float(row[schema.passengers]))
    if not (-90 <= lat <= 90 and -180 <= lon <= 180) or (lat == 0 and lon == 0):
        raise ValueError("implausible coordinates")
    if pc < 1:
        raise ValueError("passenger_count must be >= 1")
    return TripRecord(t, lat, lon, pc)


def in_region(trips: Sequence[TripRecord], station: StationSpec) -> list[TripRecord]:
    """Trips whose drop-off lies inside the station's square service region."""
    if not trips:
        return []
    xy = project([t.dropoff_lat for t in trips], [t.dropoff_lon for t in trips], station.lat, station.lon)
    keep = np.all(np.abs(xy) <= station.half_width_miles, axis=1)
    return [t for t, k in zip(trips, keep) if k]


def cluster_stops(trips: Sequence[TripRecord], n_stops: int, station: StationSpec,
                  seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """K-means on projected drop-off points.

    Returns ``(centers_xy, labels)``: stop coordinates in miles relative to
    the station, and the stop index of every trip (its nearest center).
    """
    from sklearn.cluster import KMeans

    if not trips:
        raise ValueError("no trips to cluster")
    xy = project([t.dropoff_lat for t in trips], [t.dropoff_lon for t in trips], station.lat, station.lon)
    n_distinct = len(np.unique(np.round(xy, 12), axis=0))
    if n_distinct < n_stops:
        raise ValueError(f"{n_distinct} distinct destinations < {n_stops} requested stops")
    km = KMeans(n_clusters=n_stops, init="k-means++", n_init=1, max_iter=100, tol=1e-6,
                random_state=seed, algorithm="lloyd")
    km.fit(xy)
    centers = _canonical_order(km.cluster_centers_)
    labels = nearest(xy, centers)
    return centers, labels


def _canonical_order(centers: np.ndarray) -> np.ndarray:
    # sort by angle then distance so stop numbering does not depend on k-means label order
    ang = np.round(np.arctan2(centers[:, 1], centers[:, 0]), 12)
    dist = np.round(np.hypot(centers[:, 0], centers[:, 1]), 12)
    return centers[np.lexsort((dist, ang))]


def nearest(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
    return np.argmin(d, axis=1)


@dataclass
class BinnedDemand:
    scenarios: list[DemandScenario]  # single-region scenarios, one per window
    counts: np.ndarray  # (n_windows, I, J)
    stats: list[dict]  # one row per stop


def bin_batch_demand(trips: Sequence[TripRecord], stop_labels: np.ndarray, n_stops: int,
                     headway_minutes: float, windows: Sequence[datetime], n_trains: int) -> BinnedDemand:
    """Passenger totals per (window, train interval, stop).

    Each window starts at one entry of ``windows`` and covers
    ``n_trains * headway_minutes`` minutes; interval ``i`` is
    ``[start + i*h, start + (i+1)*h)``. Trips outside every window are ignored.
    Overlapping windows are rejected.
    """
    if n_trains < 1 or not headway_minutes > 0:
        raise ValueError("need n_trains >= 1 and headway > 0")
    span = timedelta(minutes=n_trains * headway_minutes)
    starts = sorted(windows)
    for a, b in zip(starts, starts[1:]):
        if b < a + span:
            raise ValueError(f"windows starting {a} and {b} overlap (each covers {span})")
    counts = np.zeros((len(windows), n_trains, n_stops))
    order = {w: idx for idx, w in enumerate(windows)}
    labels = np.asarray(stop_labels)
    if len(labels) != len(trips):
        raise ValueError("need one stop label per trip")
    for t, j in zip(trips, labels):
        for w in starts:
            if w <= t.dropoff_time < w + span:
                i = int((t.dropoff_time - w) / timedelta(minutes=headway_minutes))
                counts[order[w], i, j] += t.passenger_count
                break
    scenarios = [DemandScenario([c]) for c in counts]
    stats = stop_statistics(counts)
    return BinnedDemand(scenarios, counts, stats)


def stop_statistics(counts: np.ndarray, region: int = 0) -> list[dict]:
    """Per-stop mean, standard deviation (population), extremes and 20/80% quantiles over all intervals."""
    rows = []
    per_stop = counts.reshape(-1, counts.shape[-1])
    for j in range(per_stop.shape[1]):
        col = per_stop[:, j]
        rows.append({
            "region": region,
            "stop": j,
            "mu": float(col.mean()) if col.size else 0.0,
            "sigma": float(col.std()) if col.size else 0.0,
            "min": float(col.min()) if col.size else 0.0,
            "max": float(col.max()) if col.size else 0.0,
            "q20": float(np.quantile(col, 0.2)) if col.size else 0.0,
            "q80": float(np.quantile(col, 0.8)) if col.size else 0.0,
        })
    return rows


@dataclass(frozen=True)
class RouteCandidate:
    stops: tuple[int, ...]  # visiting order
    arrival_minutes: tuple[float, ...]
    round_trip_minutes: float


def best_order(stops: Sequence[int], xy: np.ndarray, speed_mph: float) -> RouteCandidate:
    """Shortest station-to-station tour over ``stops`` by exhaustive permutation.

    Ties on tour length go to the order with the smaller total arrival time
    (riders first), then to the lexicographically smaller coordinate sequence.
    """
    if len(stops) > MAX_ROUTE_STOPS:
        raise ValueError(f"routes over {len(stops)} stops exceed the {MAX_ROUTE_STOPS}-stop guard")
    best = None
    for perm in itertools.permutations(stops):
        cand = _tour(perm, xy, speed_mph)
        key = (round(cand.round_trip_minutes, 9), round(sum(cand.arrival_minutes), 9),
               tuple(np.round(xy[list(perm)], 12).ravel().tolist()))
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1]


def _tour(order: Sequence[int], xy: np.ndarray, speed_mph: float) -> RouteCandidate:
    pos = np.zeros(2)
    elapsed = 0.0
    arrivals = []
    for j in order:
        elapsed += float(np.hypot(*(xy[j] - pos))) / speed_mph * 60.0
        arrivals.append(elapsed)
        pos = xy[j]
    total = elapsed + float(np.hypot(*pos)) / speed_mph * 60.0
    return RouteCandidate(tuple(order), tuple(arrivals), total)


def enumerate_routes(stops_xy: np.ndarray, max_stops_per_route: int = 3,
                     speed_mph: float = DEFAULT_SPEED_MPH, headway_minutes: float = 10.0,
                     region_id: int = 0, first_route_id: int = 0,
                     max_routes: int | None = None) -> list[RouteSpec]:
    """One route per nonempty stop subset of size <= ``max_stops_per_route``.

    Coordinates are miles relative to the station. Each subset is visited in
    its minimum-duration order. With ``max_routes``, every single-stop route is
    kept and the remaining budget goes to multi-stop routes by (size,
    duration). Routes are listed by subset size, then subset index order.
    """
    stops_xy = np.asarray(stops_xy, dtype=float)
    n = len(stops_xy)
    if max_stops_per_route < 1:
        raise ValueError("max_stops_per_route must be >= 1")
    if max_stops_per_route > MAX_ROUTE_STOPS:
        raise ValueError(f"max_stops_per_route > {MAX_ROUTE_STOPS} is rejected (factorial blowup)")
    if not speed_mph > 0:
        raise ValueError("speed must be > 0")
    cands: list[RouteCandidate] = []
    for size in range(1, min(max_stops_per_route, n) + 1):
        for subset in itertools.combinations(range(n), size):
            cands.append(best_order(subset, stops_xy, speed_mph))
    if max_routes is not None:
        singles = [c for c in cands if len(c.stops) == 1]
        if max_routes < len(singles):
            raise ValueError(f"max_routes={max_routes} cannot cover all {len(singles)} stops")
        multi = [c for c in cands if len(c.stops) > 1]
        multi.sort(key=lambda c: (len(c.stops), round(c.round_trip_minutes, 9), tuple(sorted(c.stops))))
        keep = set(id(c) for c in singles + multi[: max_routes - len(singles)])
        cands = [c for c in cands if id(c) in keep]
    routes = []
    for k, c in enumerate(cands):
        serves = [0] * n
        for j in c.stops:
            serves[j] = 1
        routes.append(RouteSpec(
            route_id=first_route_id + k,
            region_id=region_id,
            serves=tuple(serves),
            total_duration_intervals=max(1, math.ceil(c.round_trip_minutes / headway_minutes - 1e-9)),
            stop_arrival_minutes={j: t for j, t in zip(c.stops, c.arrival_minutes)},
        ))
    return routes


@dataclass
class IngestResult:
    instance: Instance
    scenarios: list[DemandScenario]
    stats: list[dict]
    stop_xy: list[np.ndarray]
    skipped: int = 0


def build_instance_from_trips(trips: Sequence[TripRecord], stations: Sequence[StationSpec],
                              stops_per_region: Sequence[int], windows: Sequence[datetime],
                              n_trains: int, headway_minutes: float = 10.0,
                              max_stops_per_route: int = 3, speed_mph: float = DEFAULT_SPEED_MPH,
                              max_routes: Sequence[int | None] | None = None,
                              fleet_bound: int = 60, vehicle_capacity: int = 5,
                              costs: CostParams = CostParams(), seed: int = 0) -> IngestResult:
    """Run the whole ingestion pipeline; one empirical scenario per window."""
    if len(stations) != len(stops_per_region):
        raise ValueError("need one stop count per station")
    regions = []
    per_region_counts = []
    stats: list[dict] = []
    stop_xy = []
    next_route = 0
    for s, (station, n_stops) in enumerate(zip(stations, stops_per_region)):
        local = in_region(trips, station)
        centers, labels = cluster_stops(local, n_stops, station, seed=seed + s)
        binned = bin_batch_demand(local, labels, n_stops, headway_minutes, windows, n_trains)
        cap = None if max_routes is None else max_routes[s]
        routes = enumerate_routes(centers, max_stops_per_route, speed_mph, headway_minutes,
                                  region_id=s, first_route_id=next_route, max_routes=cap)
        next_route += len(routes)
        regions.append(RegionSpec(s, n_trains, n_stops, tuple(routes)))
        per_region_counts.append(binned.counts)
        stats.extend(stop_statistics(binned.counts, region=s))
        stop_xy.append(centers)
    inst = Instance(tuple(regions), fleet_bound, headway_minutes, vehicle_capacity, costs)
    scenarios = [DemandScenario([c[w] for c in per_region_counts]) for w in range(len(windows))]
    return IngestResult(inst, scenarios, stats, stop_xy)


def synthetic_trace(stations: Sequence[StationSpec], start: datetime, n_days: int, minutes: float,
                    trips_per_day: int, seed: int = 0, outside_fraction: float = 0.1,
                    hotspots: int = 4) -> list[TripRecord]:
    """Random drop-offs concentrated around a few hotspots per station, for tests and demos."""
    rng = np.random.default_rng(seed)
    out = []
    for st in stations:
        centers = rng.uniform(-0.8, 0.8, size=(hotspots, 2)) * st.half_width_miles
        for d in range(n_days):
            for _ in range(trips_per_day):
                if rng.random() < outside_fraction:
                    xy = rng.uniform(1.2, 3.0, size=2) * st.half_width_miles * rng.choice([-1, 1], size=2)
                else:
                    xy = centers[rng.integers(hotspots)] + rng.normal(0, 0.08, size=2)
                    xy = np.clip(xy, -st.half_width_miles * 0.99, st.half_width_miles * 0.99)
                lat = st.lat + math.degrees(xy[1] / EARTH_RADIUS_MILES)
                lon = st.lon + math.degrees(xy[0] / (EARTH_RADIUS_MILES * math.cos(math.radians(st.lat))))
                t = start + timedelta(days=d, minutes=float(rng.uniform(0, minutes)))
                out.append(TripRecord(t.replace(microsecond=0), round(lat, 6), round(lon, 6),
                                      int(rng.choice([1, 1, 1, 2, 3]))))
    out.sort(key=lambda t: (t.dropoff_time, t.dropoff_lat, t.dropoff_lon))
    return out


def write_trips(trips: Iterable[TripRecord], path: str | Path, schema: TripSchema = TripSchema()) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([schema.time, schema.lat, schema.lon, schema.passengers])
        for t in trips:
            ts = t.dropoff_time.strftime(schema.time_format) if schema.time_format else t.dropoff_time.isoformat()
            w.writerow([ts, f"{t.dropoff_lat:.6f}", f"{t.dropoff_lon:.6f}", t.passenger_count])
