"""Problem data types and the first-stage vehicle dynamics shared by every model.

Index conventions
-----------------
Regions are addressed by their position ``s`` in ``Instance.regions``; trains
are ``i = 0 .. I_s - 1``; stops are local to a region (``j = 0 .. J_s - 1``);
routes are local to a region for array indexing (``k = 0 .. K_s - 1``) and
carry a globally sequential ``route_id``.

Per-region arrays use these shapes:

* demand, backlog ``u``: ``(I_s, J_s)``
* trips ``w``: ``(I_s, K_s)``
* assignments ``z``: ``(I_s, J_s, K_s)``, zero wherever the route skips the stop
* availability ``v``: ``(I_s,)``
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, NamedTuple, Sequence

import numpy as np


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CostParams:
    """Monetary weights of the objective.

    ``fixed_cost_per_vehicle`` is either one scalar applied to every region or
    a per-region sequence. ``terminal_backlog_penalty`` charges each passenger
    still waiting after the last train; it is off (0) by default.
    """

    fixed_cost_per_vehicle: float | tuple[float, ...] = 0.0
    wait_weight: float = 2.0
    ride_weight: float = 1.0
    terminal_backlog_penalty: float = 0.0

    def __post_init__(self):
        if not np.isscalar(self.fixed_cost_per_vehicle):
            object.__setattr__(
                self, "fixed_cost_per_vehicle", tuple(float(f) for f in self.fixed_cost_per_vehicle)
            )

    def fixed_costs(self, n_regions: int) -> np.ndarray:
        f = self.fixed_cost_per_vehicle
        if np.isscalar(f):
            return np.full(n_regions, float(f))
        if len(f) != n_regions:
            raise ValueError(f"expected {n_regions} fixed costs, got {len(f)}")
        return np.asarray(f, dtype=float)

    def scaled(self, factor: float) -> "CostParams":
        f = self.fixed_cost_per_vehicle
        f = f * factor if np.isscalar(f) else tuple(x * factor for x in f)
        return CostParams(
            f,
            self.wait_weight * factor,
            self.ride_weight * factor,
            self.terminal_backlog_penalty * factor,
        )


@dataclass(frozen=True)
class RouteSpec:
    route_id: int
    region_id: int
    serves: tuple[int, ...]
    total_duration_intervals: int
    stop_arrival_minutes: dict[int, float] = field(hash=False)

    def __post_init__(self):
        object.__setattr__(self, "serves", tuple(int(x) for x in self.serves))
        object.__setattr__(
            self,
            "stop_arrival_minutes",
            {int(j): float(t) for j, t in sorted(self.stop_arrival_minutes.items())},
        )

    @property
    def served_stops(self) -> tuple[int, ...]:
        return tuple(j for j, flag in enumerate(self.serves) if flag)

    @property
    def n_stops(self) -> int:
        return sum(self.serves)


@dataclass(frozen=True)
class RegionSpec:
    region_id: int
    num_trains: int
    num_stops: int
    routes: tuple[RouteSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "routes", tuple(self.routes))

    @property
    def num_routes(self) -> int:
        return len(self.routes)

    @cached_property
    def incidence(self) -> np.ndarray:
        """0/1 matrix ``phi`` of shape ``(J, K)``."""
        phi = np.zeros((self.num_stops, self.num_routes), dtype=np.int64)
        for k, r in enumerate(self.routes):
            phi[: len(r.serves), k] = r.serves[: self.num_stops]
        return _frozen(phi)

    @cached_property
    def stop_times(self) -> np.ndarray:
        """Travel minutes ``t_{j,k}`` of shape ``(J, K)``; zero where unserved."""
        t = np.zeros((self.num_stops, self.num_routes))
        for k, r in enumerate(self.routes):
            for j, minutes in r.stop_arrival_minutes.items():
                if 0 <= j < self.num_stops:
                    t[j, k] = minutes
        return _frozen(t)

    @cached_property
    def durations(self) -> np.ndarray:
        """Route durations ``t_k`` in headway intervals."""
        return _frozen(np.array([r.total_duration_intervals for r in self.routes], dtype=np.int64))

    @cached_property
    def served_pairs(self) -> tuple[tuple[int, int], ...]:
        """``(j, k)`` pairs with ``phi[j, k] == 1`` in row-major order."""
        jj, kk = np.nonzero(self.incidence)
        return tuple(zip(jj.tolist(), kk.tolist()))

    @cached_property
    def multi_stop(self) -> np.ndarray:
        return _frozen(self.incidence.sum(axis=0) >= 2)

    @cached_property
    def single_trip_routes(self) -> np.ndarray:
        """Multi-stop routes that never need two trips after the same train.

        Route ``k`` qualifies when every proper subset of its stops is served
        by some route that reaches each of those stops no later than ``k``
        does and takes no more intervals. Two loads on ``k`` can then be
        regrouped onto one trip of ``k`` and one sub-route trip at no extra
        cost, for any single demand realization.
        """
        phi, t, dur = self.incidence, self.stop_times, self.durations
        by_stops: dict[frozenset, list[int]] = {}
        for k in range(self.num_routes):
            by_stops.setdefault(frozenset(np.flatnonzero(phi[:, k]).tolist()), []).append(k)
        ok = np.zeros(self.num_routes, dtype=bool)
        for k in np.flatnonzero(self.multi_stop):
            stops = np.flatnonzero(phi[:, k]).tolist()
            ok[k] = all(
                any(dur[q] <= dur[k] and all(t[j, q] <= t[j, k] + 1e-9 for j in sub)
                    for q in by_stops.get(frozenset(sub), ()))
                for size in range(1, len(stops))
                for sub in itertools.combinations(stops, size)
            )
        return _frozen(ok)


@dataclass(frozen=True)
class Instance:
    regions: tuple[RegionSpec, ...]
    fleet_bound: int
    headway_minutes: float
    vehicle_capacity: int
    costs: CostParams = CostParams()

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))

    @property
    def n_regions(self) -> int:
        return len(self.regions)

    @cached_property
    def fixed_costs(self) -> np.ndarray:
        return _frozen(self.costs.fixed_costs(self.n_regions))

    @cached_property
    def cell_offsets(self) -> np.ndarray:
        """Start offset of each region in the flat ``(s, i, j)`` cell order."""
        sizes = [r.num_trains * r.num_stops for r in self.regions]
        return _frozen(np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64))

    @property
    def n_cells(self) -> int:
        return int(self.cell_offsets[-1])

    def cell_index(self, s: int, i: int, j: int) -> int:
        r = self.regions[s]
        return int(self.cell_offsets[s] + i * r.num_stops + j)

    def cells(self) -> Iterable[tuple[int, int, int]]:
        for s, r in enumerate(self.regions):
            for i in range(r.num_trains):
                for j in range(r.num_stops):
                    yield s, i, j

    def split_cells(self, flat: np.ndarray) -> tuple[np.ndarray, ...]:
        """Split a flat cell vector (or a ``(..., n_cells)`` array) into per-region ``(…, I_s, J_s)`` views."""
        flat = np.asarray(flat)
        out = []
        for s, r in enumerate(self.regions):
            a, b = self.cell_offsets[s], self.cell_offsets[s + 1]
            out.append(flat[..., a:b].reshape(flat.shape[:-1] + (r.num_trains, r.num_stops)))
        return tuple(out)

    def with_costs(self, costs: CostParams) -> "Instance":
        return Instance(self.regions, self.fleet_bound, self.headway_minutes, self.vehicle_capacity, costs)

    def with_fleet_bound(self, fleet_bound: int) -> "Instance":
        return Instance(self.regions, fleet_bound, self.headway_minutes, self.vehicle_capacity, self.costs)

    def region_subinstance(self, s: int, fleet_bound: int | None = None) -> "Instance":
        """Region ``s`` alone, keeping its own fixed cost."""
        c = self.costs
        costs = CostParams(float(self.fixed_costs[s]), c.wait_weight, c.ride_weight, c.terminal_backlog_penalty)
        bound = self.fleet_bound if fleet_bound is None else fleet_bound
        return Instance((self.regions[s],), max(1, int(bound)), self.headway_minutes, self.vehicle_capacity, costs)


class DemandScenario:
    """One realization ``n[s][i, j]`` of batch demand."""

    __slots__ = ("demand",)

    def __init__(self, demand: Sequence[np.ndarray]):
        arrs = []
        for d in demand:
            a = np.array(d, dtype=float)
            if a.ndim != 2:
                raise ValueError("each region's demand must be a (trains, stops) array")
            arrs.append(_frozen(a))
        self.demand = tuple(arrs)

    @classmethod
    def from_flat(cls, instance: Instance, flat: np.ndarray) -> "DemandScenario":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (instance.n_cells,):
            raise ValueError(f"expected {instance.n_cells} cells, got shape {flat.shape}")
        return cls(instance.split_cells(flat))

    @classmethod
    def zeros(cls, instance: Instance) -> "DemandScenario":
        return cls.from_flat(instance, np.zeros(instance.n_cells))

    def flat(self) -> np.ndarray:
        return np.concatenate([d.ravel() for d in self.demand])

    def __getitem__(self, key: tuple[int, int, int]) -> float:
        s, i, j = key
        return float(self.demand[s][i, j])

    def __eq__(self, other) -> bool:
        if not isinstance(other, DemandScenario) or len(other.demand) != len(self.demand):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.demand, other.demand))

    def __repr__(self) -> str:
        return f"DemandScenario(total={self.flat().sum():g}, regions={len(self.demand)})"

    def check(self, instance: Instance) -> None:
        if len(self.demand) != instance.n_regions:
            raise ValueError(f"scenario has {len(self.demand)} regions, instance has {instance.n_regions}")
        for s, (d, r) in enumerate(zip(self.demand, instance.regions)):
            if d.shape != (r.num_trains, r.num_stops):
                raise ValueError(
                    f"region {s}: demand shape {d.shape} != ({r.num_trains}, {r.num_stops})"
                )
            if np.any(d < 0) or not np.all(np.isfinite(d)):
                raise ValueError(f"region {s}: demand must be finite and nonnegative")


@dataclass(frozen=True, eq=False)
class FirstStageSolution:
    fleet: tuple[int, ...]
    trips: tuple[np.ndarray, ...]
    availability: tuple[np.ndarray, ...]

    @property
    def total_fleet(self) -> int:
        return int(sum(self.fleet))


@dataclass(frozen=True, eq=False)
class SecondStagePlan:
    assignments: tuple[np.ndarray, ...]
    backlog: tuple[np.ndarray, ...]
    objective_value: float


@dataclass(frozen=True)
class Violation:
    code: str
    location: str
    message: str


class Availability(NamedTuple):
    v: tuple[np.ndarray, ...]
    witness: tuple[int, int] | None  # first (s, i) with a negative count


class CostBreakdown(NamedTuple):
    total: float
    wait_minutes: np.ndarray  # TWT per region
    ride_minutes: np.ndarray  # TRT per region


def validate_instance(instance: Instance) -> list[Violation]:
    """Return every invariant violation found in ``instance`` (empty means valid)."""
    out: list[Violation] = []
    add = lambda code, loc, msg: out.append(Violation(code, loc, msg))  # noqa: E731
    c = instance.costs
    f = instance.fixed_costs if _fixed_costs_ok(instance, add) else np.zeros(instance.n_regions)
    if np.any(f < 0):
        add("negative_cost", "costs.fixed_cost_per_vehicle", "fixed cost must be >= 0")
    for name in ("wait_weight", "ride_weight", "terminal_backlog_penalty"):
        if getattr(c, name) < 0:
            add("negative_cost", f"costs.{name}", f"{name} must be >= 0")
    if c.wait_weight < c.ride_weight:
        warnings.warn("wait_weight < ride_weight: waiting is usually valued above riding", stacklevel=2)
    if instance.fleet_bound < 1:
        add("fleet_bound", "fleet_bound", "fleet bound M must be >= 1")
    if not instance.headway_minutes > 0:
        add("headway", "headway_minutes", "headway must be > 0")
    if instance.vehicle_capacity < 1:
        add("capacity", "vehicle_capacity", "vehicle capacity must be >= 1")

    ids = [r.region_id for r in instance.regions]
    if len(set(ids)) != len(ids):
        add("duplicate_region", "regions", "region ids must be distinct")
    if not instance.regions:
        add("empty", "regions", "instance has no regions")

    h = instance.headway_minutes
    expected_route_id = 0
    for s, reg in enumerate(instance.regions):
        where = f"region[{s}]"
        if reg.num_trains < 1:
            add("trains", where, "region needs at least one train")
        if reg.num_stops < 1:
            add("stops", where, "region needs at least one stop")
        for k, route in enumerate(reg.routes):
            rloc = f"{where}.routes[{k}]"
            if route.route_id != expected_route_id:
                add("route_numbering", rloc, f"route_id {route.route_id} != expected {expected_route_id}")
            expected_route_id = route.route_id + 1
            if route.region_id != reg.region_id:
                add("route_region", rloc, "route region_id differs from its region")
            if len(route.serves) != reg.num_stops or any(x not in (0, 1) for x in route.serves):
                add("incidence", rloc, "serves must be a 0/1 vector over the region's stops")
            if route.n_stops < 1:
                add("empty_route", rloc, "route serves no stop")
            if route.total_duration_intervals < 1:
                add("route_duration", rloc, "total_duration_intervals must be >= 1")
            if set(route.stop_arrival_minutes) != set(route.served_stops):
                add("stop_times", rloc, "stop_arrival_minutes must be defined exactly for served stops")
            for j, t in route.stop_arrival_minutes.items():
                if not t > 0:
                    add("stop_times", f"{rloc}.stop[{j}]", "stop travel time must be > 0")
                elif t > route.total_duration_intervals * h + 1e-9:
                    add("stop_time_exceeds_route_duration", f"{rloc}.stop[{j}]",
                        f"stop time exceeds route duration ({t} > {route.total_duration_intervals} x {h})")
        if reg.routes and reg.num_stops >= 1 and all(len(r.serves) == reg.num_stops for r in reg.routes):
            for j in np.flatnonzero(reg.incidence.sum(axis=1) == 0):
                add("unreachable_stop", f"{where}.stop[{j}]", "unreachable stop: no route serves it")
        elif not reg.routes:
            add("unreachable_stop", where, "unreachable stop: region has no routes")
    return out


def _fixed_costs_ok(instance: Instance, add) -> bool:
    try:
        instance.costs.fixed_costs(instance.n_regions)
    except ValueError as exc:
        add("fixed_costs", "costs.fixed_cost_per_vehicle", str(exc))
        return False
    return True


def _check_trips(instance: Instance, fleet, trips) -> tuple[np.ndarray, list[np.ndarray]]:
    fleet = np.asarray(fleet)
    if fleet.shape != (instance.n_regions,):
        raise ValueError(f"fleet must have {instance.n_regions} entries, got shape {fleet.shape}")
    if len(trips) != instance.n_regions:
        raise ValueError(f"trips must have {instance.n_regions} regions, got {len(trips)}")
    out = []
    for s, (w, reg) in enumerate(zip(trips, instance.regions)):
        w = np.asarray(w)
        if w.shape != (reg.num_trains, reg.num_routes):
            raise ValueError(f"region {s}: trips shape {w.shape} != ({reg.num_trains}, {reg.num_routes})")
        out.append(w)
    return fleet, out


def vehicle_availability(instance: Instance, fleet, trips) -> Availability:
    """Idle vehicles ``v[s][i]`` at the station after each train's dispatches.

    A trip on route ``k`` leaving after train ``i`` is back in time for train
    ``i + t_k``; returns that would land before train 0 do not exist.
    """
    fleet, trips = _check_trips(instance, fleet, trips)
    vs = []
    witness = None
    for s, (w, reg) in enumerate(zip(trips, instance.regions)):
        n_i = reg.num_trains
        returns = np.zeros(n_i, dtype=w.dtype if w.dtype.kind in "iu" else float)
        for k, tk in enumerate(reg.durations):
            if tk < n_i:
                returns[tk:] += w[: n_i - tk, k]
        net = returns - w.sum(axis=1)
        v = fleet[s] + np.cumsum(net)
        if witness is None:
            neg = np.flatnonzero(v < 0)
            if neg.size:
                witness = (s, int(neg[0]))
        vs.append(v)
    return Availability(tuple(vs), witness)


def check_plan_shapes(instance: Instance, plan: SecondStagePlan) -> None:
    if len(plan.assignments) != instance.n_regions or len(plan.backlog) != instance.n_regions:
        raise ValueError("plan region count does not match instance")
    for s, reg in enumerate(instance.regions):
        shp_z = (reg.num_trains, reg.num_stops, reg.num_routes)
        shp_u = (reg.num_trains, reg.num_stops)
        if np.shape(plan.assignments[s]) != shp_z:
            raise ValueError(f"region {s}: assignments shape {np.shape(plan.assignments[s])} != {shp_z}")
        if np.shape(plan.backlog[s]) != shp_u:
            raise ValueError(f"region {s}: backlog shape {np.shape(plan.backlog[s])} != {shp_u}")


def second_stage_cost(instance: Instance, plan: SecondStagePlan) -> CostBreakdown:
    check_plan_shapes(instance, plan)
    c = instance.costs
    h = instance.headway_minutes
    twt = np.empty(instance.n_regions)
    trt = np.empty(instance.n_regions)
    terminal = 0.0
    for s, reg in enumerate(instance.regions):
        u = np.asarray(plan.backlog[s], dtype=float)
        z = np.asarray(plan.assignments[s], dtype=float)
        twt[s] = h * u.sum()
        trt[s] = np.einsum("ijk,jk->", z, reg.stop_times * reg.incidence)
        terminal += u[-1].sum()
    total = c.wait_weight * twt.sum() + c.ride_weight * trt.sum() + c.terminal_backlog_penalty * terminal
    return CostBreakdown(float(total), twt, trt)


def first_stage_from_trips(instance: Instance, fleet, trips) -> FirstStageSolution:
    """Build a :class:`FirstStageSolution`, raising if ``(fleet, trips)`` is infeasible."""
    fleet_arr, trips_arr = _check_trips(instance, fleet, trips)
    if np.any(fleet_arr < 0) or any(np.any(w < 0) for w in trips_arr):
        raise ValueError("fleet and trips must be nonnegative")
    if fleet_arr.sum() > instance.fleet_bound:
        raise ValueError(f"total fleet {fleet_arr.sum()} exceeds bound {instance.fleet_bound}")
    avail = vehicle_availability(instance, fleet_arr, trips_arr)
    if avail.witness is not None:
        s, i = avail.witness
        raise ValueError(f"negative vehicle availability in region {s} after train {i}")
    return FirstStageSolution(
        tuple(int(x) for x in fleet_arr),
        tuple(_frozen(np.asarray(w, dtype=np.int64).copy()) for w in trips_arr),
        tuple(_frozen(np.asarray(v, dtype=np.int64)) for v in avail.v),
    )
