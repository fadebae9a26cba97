"""Reference implementations used only by the tests.

Nothing here imports the model builders: the recourse LP is written out
densely for scipy's ``linprog``, availability is replayed vehicle by vehicle,
and first-stage decisions are enumerated exhaustively.
"""

from __future__ import annotations

import itertools

import numpy as np
from scipy.optimize import linprog

from lmfleet.domain import CostParams, Instance, RegionSpec, RouteSpec


def recourse_value(instance: Instance, trips, demand) -> float:
    """Q(m, w, n) from a dense LP over (z, u) for every region."""
    total = 0.0
    c = instance.costs
    h = instance.headway_minutes
    for s, reg in enumerate(instance.regions):
        I, J, K = reg.num_trains, reg.num_stops, reg.num_routes
        w = np.asarray(trips[s], dtype=float)
        n = np.asarray(demand[s], dtype=float)
        pairs = [(j, k) for k in range(K) for j in reg.routes[k].served_stops]
        nz = I * len(pairs)
        nu = I * J
        zi = {(i, p): i * len(pairs) + a for i in range(I) for a, p in enumerate(pairs)}
        cost = np.zeros(nz + nu)
        for (i, (j, k)), col in zi.items():
            cost[col] = c.ride_weight * reg.routes[k].stop_arrival_minutes[j]
        for i in range(I):
            for j in range(J):
                cost[nz + i * J + j] = c.wait_weight * h + (c.terminal_backlog_penalty if i == I - 1 else 0.0)
        a_eq = np.zeros((I * J, nz + nu))
        b_eq = np.zeros(I * J)
        for i in range(I):
            for j in range(J):
                r = i * J + j
                a_eq[r, nz + r] = 1.0
                if i > 0:
                    a_eq[r, nz + (i - 1) * J + j] = -1.0
                for a, (jj, k) in enumerate(pairs):
                    if jj == j:
                        a_eq[r, zi[(i, (jj, k))]] = 1.0
                b_eq[r] = n[i, j]
        a_ub = np.zeros((I * K, nz + nu))
        b_ub = np.zeros(I * K)
        for i in range(I):
            for k in range(K):
                for (j, kk) in pairs:
                    if kk == k:
                        a_ub[i * K + k, zi[(i, (j, kk))]] = 1.0
                b_ub[i * K + k] = instance.vehicle_capacity * w[i, k]
        res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        assert res.status == 0, res.message
        total += res.fun
    return float(total)


def simulate_availability(instance: Instance, fleet, trips) -> list[np.ndarray]:
    """Idle count after each train, tracking every vehicle's return time (feasible schedules only)."""
    out = []
    for s, reg in enumerate(instance.regions):
        free_at = [0] * int(fleet[s])  # train index from which each vehicle is at the station
        idle = []
        for i in range(reg.num_trains):
            for k in range(reg.num_routes):
                for _ in range(int(trips[s][i, k])):
                    v = next(v for v, t in enumerate(free_at) if t <= i)
                    free_at[v] = i + reg.routes[k].total_duration_intervals
            idle.append(sum(1 for t in free_at if t <= i))
        out.append(np.array(idle))
    return out


def feasible(instance: Instance, fleet, trips) -> bool:
    for s, reg in enumerate(instance.regions):
        back = np.zeros(reg.num_trains + 64)
        idle = int(fleet[s])
        for i in range(reg.num_trains):
            idle += back[i]
            for k in range(reg.num_routes):
                idle -= trips[s][i, k]
                back[i + reg.routes[k].total_duration_intervals] += trips[s][i, k]
            if idle < 0:
                return False
    return sum(fleet) <= instance.fleet_bound


def enumerate_schedules(instance: Instance, fleet):
    """Every feasible trip schedule for the given fleet (single-region friendly, tiny sizes only)."""
    per_region = []
    for s, reg in enumerate(instance.regions):
        m = int(fleet[s])
        opts = []
        for flat in itertools.product(range(m + 1), repeat=reg.num_trains * reg.num_routes):
            w = np.array(flat, dtype=np.int64).reshape(reg.num_trains, reg.num_routes)
            sub = Instance((reg,), max(1, m), instance.headway_minutes, instance.vehicle_capacity, instance.costs)
            if feasible(sub, [m], [w]):
                opts.append(w)
        per_region.append(opts)
    for combo in itertools.product(*per_region):
        yield list(combo)


def enumerate_fleets(instance: Instance):
    for fleet in itertools.product(range(instance.fleet_bound + 1), repeat=instance.n_regions):
        if sum(fleet) <= instance.fleet_bound:
            yield fleet


def brute_force(instance: Instance, demands, weights=None) -> float:
    """min over all feasible (m, w) of f.m + sum_r p_r Q(m, w, n_r)."""
    demands = list(demands)
    p = np.full(len(demands), 1 / len(demands)) if weights is None else np.asarray(weights)
    f = instance.fixed_costs
    cache: dict[bytes, float] = {}
    best = np.inf
    for fleet in enumerate_fleets(instance):
        for trips in enumerate_schedules(instance, fleet):
            key = b"".join(w.tobytes() for w in trips)
            if key not in cache:
                cache[key] = float(sum(pr * recourse_value(instance, trips, d) for pr, d in zip(p, demands)))
            best = min(best, float(f @ np.asarray(fleet)) + cache[key])
    return best


def brute_dynamic(instance: Instance, fleet, demand) -> float:
    return min(recourse_value(instance, trips, demand) for trips in enumerate_schedules(instance, fleet))


def random_instance(rng: np.random.Generator, n_regions: int = 1, trains=(2, 3), stops=(2, 3),
                    fleet_bound: int = 3, capacity=(1, 3), costs: CostParams | None = None,
                    max_duration: int = 2) -> Instance:
    """Singletons for every stop plus a random set of two-stop routes."""
    regions, rid = [], 0
    for s in range(n_regions):
        I = int(rng.integers(trains[0], trains[1] + 1))
        J = int(rng.integers(stops[0], stops[1] + 1))
        routes = []
        for j in range(J):
            serves = [0] * J
            serves[j] = 1
            t = float(rng.integers(2, 9))
            routes.append(RouteSpec(rid, s, serves, int(rng.integers(1, max_duration + 1)), {j: t}))
            rid += 1
        for a, b in itertools.combinations(range(J), 2):
            if rng.random() < 0.6:
                serves = [0] * J
                serves[a] = serves[b] = 1
                ta = float(rng.integers(2, 7))
                tb = ta + float(rng.integers(1, 6))
                dur = max(int(np.ceil(2 * tb / 10)), int(rng.integers(1, max_duration + 1)))
                routes.append(RouteSpec(rid, s, serves, dur, {a: ta, b: tb}))
                rid += 1
        regions.append(RegionSpec(s, I, J, tuple(routes)))
    if costs is None:
        costs = CostParams(float(rng.choice([0.0, 5.0, 20.0])), 2.0, 1.0)
    return Instance(tuple(regions), fleet_bound, 10.0, int(rng.integers(capacity[0], capacity[1] + 1)), costs)


def random_schedule(rng: np.random.Generator, instance: Instance, fleet) -> list[np.ndarray]:
    """A random feasible trip schedule: dispatch a random share of idle vehicles each train."""
    out = []
    for s, reg in enumerate(instance.regions):
        w = np.zeros((reg.num_trains, reg.num_routes), dtype=np.int64)
        back = np.zeros(reg.num_trains + 64, dtype=np.int64)
        idle = int(fleet[s])
        for i in range(reg.num_trains):
            idle += back[i]
            for _ in range(int(rng.integers(0, idle + 1))):
                k = int(rng.integers(reg.num_routes))
                w[i, k] += 1
                back[i + reg.routes[k].total_duration_intervals] += 1
                idle -= 1
        out.append(w)
    return out


def random_demand(rng: np.random.Generator, instance: Instance, high: int = 5) -> list[np.ndarray]:
    return [rng.integers(0, high + 1, size=(r.num_trains, r.num_stops)).astype(float) for r in instance.regions]
