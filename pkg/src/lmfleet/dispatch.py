"""Fast heuristic trip schedules for one region.

The dispatcher walks the trains in order. At each train it sends available
vehicles one at a time on the route that currently removes the most waiting
cost, filling stops in the order the route visits them, until no trip has
positive value or no vehicle is left. Vehicles return ``t_k`` intervals
later. A penalty per interval a vehicle spends away, in multiples of one
passenger's per-headway waiting cost, steers the dispatcher towards short
routes when the fleet is tight.

A schedule is always scored with the exact fixed-schedule LP, so every value
reported here is attainable (an upper bound on the optimal recourse).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import add_service, extract_plan, service_objective
from .domain import Instance, RegionSpec
from .errors import SolveFailed
from .milp import LinearModel, ReusableLp, SolverParams, Status

_EPS = 1e-9


@dataclass(frozen=True)
class GreedyOptions:
    """One dispatch run per entry of ``vehicle_penalties`` (multiples of ``wait_weight * headway``)."""

    vehicle_penalties: tuple[float, ...] = (0.0, 0.5, 2.0)

    def __post_init__(self):
        pens = tuple(float(p) for p in self.vehicle_penalties)
        if not pens or min(pens) < 0:
            raise ValueError("vehicle_penalties must be a nonempty tuple of nonnegative numbers")
        object.__setattr__(self, "vehicle_penalties", pens)


class _RouteTable:
    """Routes padded to a common stop count, stops listed in visiting order."""

    def __init__(self, region: RegionSpec):
        phi = region.incidence.astype(bool)
        t = region.stop_times
        K = region.num_routes
        orders = []
        for k in range(K):
            js = np.flatnonzero(phi[:, k])
            orders.append(js[np.argsort(t[js, k], kind="stable")])
        L = max((len(o) for o in orders), default=1)
        self.stops = np.full((K, L), region.num_stops, dtype=np.int64)  # pad -> dummy stop
        self.times = np.zeros((K, L))
        for k, o in enumerate(orders):
            self.stops[k, : len(o)] = o
            self.times[k, : len(o)] = t[o, k]
        self.pad = self.stops == region.num_stops
        self.durations = region.durations.astype(np.int64)
        self.multi = region.multi_stop.copy()


def greedy_trips(instance: Instance, s: int, fleet: int, demand: np.ndarray, weights=None,
                 vehicle_penalty: float = 0.0, tighten: bool = True) -> np.ndarray:
    """Dispatch schedule ``w`` of shape (trains, routes) for region ``s``.

    ``demand`` is one (trains, stops) array or a stack (R, trains, stops);
    with a stack the dispatcher maximizes the ``weights``-averaged value.
    With ``tighten`` a multi-stop route runs at most once per train.
    """
    reg = instance.regions[s]
    tab = _RouteTable(reg)
    n = np.asarray(demand, dtype=float)
    if n.ndim == 2:
        n = n[None]
    R, I, J = n.shape
    if (I, J) != (reg.num_trains, reg.num_stops):
        raise ValueError(f"demand shape {(I, J)} does not match region {s}")
    p = np.full(R, 1.0 / R) if weights is None else np.asarray(weights, dtype=float)
    K = reg.num_routes
    cap = float(instance.vehicle_capacity)
    c = instance.costs
    wait = c.wait_weight * instance.headway_minutes
    w = np.zeros((I, K), dtype=np.int64)
    if K == 0 or fleet <= 0:
        return w
    back = np.zeros(I + int(tab.durations.max()) + 1, dtype=np.int64)
    a = np.zeros((R, J + 1))
    idle = int(fleet)
    for i in range(I):
        a[:, :J] += n[:, i]
        gain = wait + (c.terminal_backlog_penalty if i == I - 1 else 0.0) - c.ride_weight * tab.times
        gain = np.where(tab.pad | (gain <= 0), 0.0, gain)
        away = np.minimum(tab.durations - 1, I - 1 - i).clip(min=0)
        q = idle + int(back[i])
        used = np.zeros(K, dtype=bool)
        while q > 0:
            load = a[:, tab.stops] * (gain > 0)  # (R, K, L)
            x = np.empty_like(load)
            room = np.full(load.shape[:2], cap)
            for l in range(load.shape[2]):
                x[:, :, l] = np.minimum(room, load[:, :, l])
                room -= x[:, :, l]
            value = p @ (x * gain).sum(axis=2) - vehicle_penalty * wait * away
            if tighten:
                value[used & tab.multi] = -np.inf
            k = int(np.argmax(value))
            if not value[k] > _EPS * wait:
                break
            a[:, tab.stops[k]] -= x[:, k, :]
            a[:, J] = 0.0
            w[i, k] += 1
            used[k] = True
            q -= 1
            back[i + tab.durations[k]] += 1
        idle = q
    return w


class RegionRecourseLp:
    """Fixed-schedule LP of one region; trips and demand both enter as row bounds."""

    def __init__(self, instance: Instance, s: int, params: SolverParams = SolverParams()):
        reg = instance.regions[s]
        self.instance = instance.region_subinstance(s)
        self.capacity = float(instance.vehicle_capacity)
        zeros = np.zeros((reg.num_trains, reg.num_stops))
        model = LinearModel(f"region_recourse[{s}]")
        self.svc = add_service(model, self.instance, 0, zeros,
                               w_values=np.zeros((reg.num_trains, reg.num_routes)))
        idx, val = service_objective(self.instance, 0, self.svc)
        model.set_objective("min", idx, val)
        self._lp = ReusableLp(model, params)
        self._bal = self.svc.balance_rows.ravel()
        self._cap = self.svc.capacity_rows.ravel()

    def _run(self, trips: np.ndarray, demand: np.ndarray):
        n = np.asarray(demand, dtype=float).ravel()
        hi = self.capacity * np.asarray(trips, dtype=float).ravel()
        self._lp.set_row_bounds(self._bal, n, n)
        self._lp.set_row_bounds(self._cap, np.full(hi.shape, -np.inf), hi)
        out = self._lp.solve()
        if out.status is not Status.OPTIMAL:
            raise SolveFailed(f"region recourse LP ended with status {out.status.value}", out)
        return out

    def value(self, trips: np.ndarray, demand: np.ndarray) -> float:
        return float(self._run(trips, demand).objective_value)

    def plan(self, trips: np.ndarray, demand: np.ndarray):
        """``(z, u, value)`` for the region."""
        out = self._run(trips, demand)
        p = extract_plan(out, [self.svc], self.instance, out.objective_value)
        return p.assignments[0], p.backlog[0], p.objective_value


@dataclass(frozen=True, eq=False)
class ScheduleChoice:
    trips: np.ndarray
    value: float  # weighted mean recourse over the scenarios
    scenario_values: np.ndarray
    candidate: int  # index into the candidate list (penalties first, then extras)


class RegionScheduler:
    """Best of several dispatch runs (plus optional given schedules), scored by the LP."""

    def __init__(self, instance: Instance, s: int, opts: GreedyOptions = GreedyOptions(), tighten: bool = True,
                 params: SolverParams = SolverParams()):
        self.instance = instance
        self.s = s
        self.opts = opts
        self.tighten = tighten
        self.lp = RegionRecourseLp(instance, s, params)

    def choose(self, fleet: int, demands: np.ndarray, weights=None, extra=()) -> ScheduleChoice:
        d = np.asarray(demands, dtype=float)
        if d.ndim == 2:
            d = d[None]
        p = np.full(len(d), 1.0 / len(d)) if weights is None else np.asarray(weights, dtype=float)
        cands = [greedy_trips(self.instance, self.s, fleet, d, p, pen, self.tighten)
                 for pen in self.opts.vehicle_penalties]
        cands += [np.asarray(e, dtype=np.int64) for e in extra]
        best = None
        seen: list[np.ndarray] = []
        for c_idx, w in enumerate(cands):
            if any(np.array_equal(w, o) for o in seen):
                continue
            seen.append(w)
            vals = np.array([self.lp.value(w, dr) for dr in d])
            v = float(p @ vals)
            if best is None or v < best.value - _EPS * max(1.0, abs(best.value)):
                best = ScheduleChoice(w, v, vals, c_idx)
        return best
