"""Versioned JSON/CSV file formats.

Every JSON document carries ``schema_version`` and ``kind``. Numbers are
written with Python's shortest round-trip repr, and integral floats in CSV
files are written without a decimal point, so equal data always gives
byte-identical files. Field layouts are documented in ``docs/schemas.md``.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
from pathlib import Path

import numpy as np

from .domain import CostParams, DemandScenario, FirstStageSolution, Instance, RegionSpec, RouteSpec, \
    first_stage_from_trips
from .dr import AmbiguityInfo

SCHEMA_VERSION = 1
SCENARIO_COLUMNS = ("scenario_id", "region", "train", "stop", "demand")


class DataError(ValueError):
    """A file is missing, malformed or inconsistent with the instance."""


def fmt(x) -> str:
    """Canonical text for a number in CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isfinite(x) and x == int(x) and abs(x) < 2**53:
        return str(int(x))
    return repr(x)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(_plain(doc), indent=2) + "\n"


def write_json(path: str | Path, doc: dict) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def read_json(path: str | Path, kind: str | None = None) -> dict:
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {p}")
    try:
        doc = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{p}: expected a JSON object")
    version = doc.get("schema_version")
    if version != SCHEMA_VERSION:
        raise DataError(f"{p}: unsupported schema_version {version!r} (expected {SCHEMA_VERSION})")
    if kind is not None and doc.get("kind") != kind:
        raise DataError(f"{p}: expected kind {kind!r}, found {doc.get('kind')!r}")
    return doc


# -- instance ---------------------------------------------------------------

def instance_to_dict(instance: Instance) -> dict:
    c = instance.costs
    f = c.fixed_cost_per_vehicle
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": "instance",
        "fleet_bound": instance.fleet_bound,
        "headway_minutes": instance.headway_minutes,
        "vehicle_capacity": instance.vehicle_capacity,
        "costs": {
            "fixed_cost_per_vehicle": f if np.isscalar(f) else list(f),
            "wait_weight": c.wait_weight,
            "ride_weight": c.ride_weight,
            "terminal_backlog_penalty": c.terminal_backlog_penalty,
        },
        "regions": [
            {
                "region_id": r.region_id,
                "num_trains": r.num_trains,
                "num_stops": r.num_stops,
                "routes": [
                    {
                        "route_id": k.route_id,
                        "region_id": k.region_id,
                        "serves": list(k.serves),
                        "total_duration_intervals": k.total_duration_intervals,
                        "stop_arrival_minutes": {str(j): t for j, t in sorted(k.stop_arrival_minutes.items())},
                    }
                    for k in r.routes
                ],
            }
            for r in instance.regions
        ],
    }


def _require(d: dict, keys, where: str):
    missing = [k for k in keys if k not in d]
    if missing:
        raise DataError(f"{where}: missing field(s) {missing}")
    extra = set(d) - set(keys)
    if extra:
        raise DataError(f"{where}: unknown field(s) {sorted(extra)}")


def instance_from_dict(doc: dict) -> Instance:
    try:
        _require(doc, ("schema_version", "kind", "fleet_bound", "headway_minutes", "vehicle_capacity", "costs",
                       "regions"), "instance")
        cd = doc["costs"]
        _require(cd, ("fixed_cost_per_vehicle", "wait_weight", "ride_weight", "terminal_backlog_penalty"), "costs")
        f = cd["fixed_cost_per_vehicle"]
        costs = CostParams(float(f) if np.isscalar(f) else tuple(f), float(cd["wait_weight"]),
                           float(cd["ride_weight"]), float(cd["terminal_backlog_penalty"]))
        regions = []
        for rd in doc["regions"]:
            _require(rd, ("region_id", "num_trains", "num_stops", "routes"), "region")
            routes = []
            for kd in rd["routes"]:
                _require(kd, ("route_id", "region_id", "serves", "total_duration_intervals",
                              "stop_arrival_minutes"), "route")
                routes.append(RouteSpec(int(kd["route_id"]), int(kd["region_id"]), tuple(int(x) for x in kd["serves"]),
                                        int(kd["total_duration_intervals"]),
                                        {int(j): float(t) for j, t in kd["stop_arrival_minutes"].items()}))
            regions.append(RegionSpec(int(rd["region_id"]), int(rd["num_trains"]), int(rd["num_stops"]), tuple(routes)))
        return Instance(tuple(regions), int(doc["fleet_bound"]), float(doc["headway_minutes"]),
                        int(doc["vehicle_capacity"]), costs)
    except DataError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError) as exc:
        raise DataError(f"malformed instance: {exc}") from None


def save_instance(instance: Instance, path: str | Path) -> None:
    write_json(path, instance_to_dict(instance))


def load_instance(path: str | Path) -> Instance:
    return instance_from_dict(read_json(path, "instance"))


# -- scenarios --------------------------------------------------------------

def scenarios_to_csv(scenarios, instance: Instance | None = None) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCENARIO_COLUMNS)
    for r, sc in enumerate(scenarios):
        for s, d in enumerate(sc.demand):
            for i in range(d.shape[0]):
                for j in range(d.shape[1]):
                    w.writerow((r, s, i, j, fmt(d[i, j])))
    return buf.getvalue()


def save_scenarios(scenarios, path: str | Path) -> None:
    Path(path).write_text(scenarios_to_csv(scenarios), encoding="utf-8")


def load_scenarios(path: str | Path, instance: Instance) -> list[DemandScenario]:
    """Read a long-format scenario CSV; every cell of every scenario must be present exactly once."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {p}")
    with p.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != SCENARIO_COLUMNS:
            raise DataError(f"{p}: header must be {','.join(SCENARIO_COLUMNS)}")
        rows = list(reader)
    if not rows:
        raise DataError(f"{p}: no scenarios")
    try:
        a = np.array([[float(x) for x in row] for row in rows if row])
    except ValueError as exc:
        raise DataError(f"{p}: non-numeric value ({exc})") from None
    if a.ndim != 2 or a.shape[1] != 5:
        raise DataError(f"{p}: every row needs 5 columns")
    ids = a[:, :4]
    if np.any(ids != np.rint(ids)) or np.any(ids < 0):
        raise DataError(f"{p}: ids must be nonnegative integers")
    ids = ids.astype(np.int64)
    n_scen = int(ids[:, 0].max()) + 1
    if np.any(ids[:, 1] >= instance.n_regions):
        raise DataError(f"{p}: region index out of range")
    flat = np.full((n_scen, instance.n_cells), np.nan)
    for (r, s, i, j), v in zip(ids, a[:, 4]):
        reg = instance.regions[s]
        if i >= reg.num_trains or j >= reg.num_stops:
            raise DataError(f"{p}: cell (region {s}, train {i}, stop {j}) outside the instance")
        c = instance.cell_index(s, i, j)
        if not np.isnan(flat[r, c]):
            raise DataError(f"{p}: duplicate row for scenario {r}, cell ({s},{i},{j})")
        flat[r, c] = v
    if np.isnan(flat).any():
        r, c = np.argwhere(np.isnan(flat))[0]
        raise DataError(f"{p}: scenario {r} is missing cell {c}")
    if np.any(flat < 0) or not np.all(np.isfinite(flat)):
        raise DataError(f"{p}: demand must be finite and nonnegative")
    return [DemandScenario.from_flat(instance, row) for row in flat]


# -- ambiguity --------------------------------------------------------------

def ambiguity_to_dict(amb: AmbiguityInfo, meta: dict | None = None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "ambiguity",
           "regions": [{"mean": m, "lower": lo, "upper": hi} for m, lo, hi in zip(amb.mean, amb.lower, amb.upper)]}
    if meta:
        doc["meta"] = meta
    return doc


def load_ambiguity(path: str | Path, instance: Instance) -> AmbiguityInfo:
    doc = read_json(path, "ambiguity")
    try:
        regs = doc["regions"]
        amb = AmbiguityInfo([r["mean"] for r in regs], [r["lower"] for r in regs], [r["upper"] for r in regs])
        amb.check(instance)
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed ambiguity set ({exc})") from None
    return amb


# -- first-stage solutions --------------------------------------------------

def solution_to_dict(fs: FirstStageSolution, meta: dict | None = None) -> dict:
    doc = {"schema_version": SCHEMA_VERSION, "kind": "solution", "fleet": list(fs.fleet),
           "total_fleet": fs.total_fleet, "trips": [np.asarray(w).tolist() for w in fs.trips],
           "availability": [np.asarray(v).tolist() for v in fs.availability]}
    if meta:
        doc["meta"] = meta
    return doc


def load_solution(path: str | Path, instance: Instance) -> FirstStageSolution:
    doc = read_json(path, "solution")
    try:
        fs = first_stage_from_trips(instance, doc["fleet"], [np.asarray(w, dtype=np.int64) for w in doc["trips"]])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{path}: invalid solution ({exc})") from None
    return fs


# -- generic long-format CSV ------------------------------------------------

def rows_to_csv(columns, rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def write_csv(path: str | Path, columns, rows) -> None:
    Path(path).write_text(rows_to_csv(columns, rows), encoding="utf-8")


def load_config(path: str | Path) -> dict:
    """A TOML or JSON mapping (chosen by file extension)."""
    p = Path(path)
    if not p.is_file():
        raise DataError(f"file not found: {p}")
    try:
        if p.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            return tomllib.loads(p.read_text(encoding="utf-8"))
        doc = json.loads(p.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DataError(f"{p}: cannot parse config ({exc})") from None
    if not isinstance(doc, dict):
        raise DataError(f"{p}: config must be a mapping")
    return doc
