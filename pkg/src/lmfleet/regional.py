"""Fleet sizing by per-region value functions and a resource-allocation DP.

Regions share nothing but the fleet bound, so for fixed fleet sizes the
problem splits into one sub-problem per region:

    min  sum_s f_s m_s + F_s(m_s)   s.t.  sum_s m_s <= M

where ``F_s(m)`` is the best (weighted) second-stage cost of region ``s``
with exactly ``m`` vehicles. ``F_s`` is non-increasing, so each region only
needs to be tabulated up to the point where an extra vehicle can no longer
pay for itself; a small DP then splits the bound.

Sub-problems are either solved exactly (``"milp"``) or by the dispatch
heuristic scored with the exact LP (``"greedy"``). In the greedy case the
table is replaced by its running minimum, which keeps it non-increasing
(a schedule for ``m`` vehicles is feasible with more).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .blocks import add_first_stage, add_service, service_objective
from .dispatch import GreedyOptions, RegionScheduler
from .domain import Instance
from .errors import SolveFailed
from .milp import LinearModel, SolverParams, Status, round_integral
from .milp import solve as milp_solve

_RTOL = 1e-9


class Subproblem(str, enum.Enum):
    MILP = "milp"
    GREEDY = "greedy"


@dataclass(frozen=True)
class RegionPoint:
    fleet: int
    value: float  # envelope value F(fleet)
    trips: np.ndarray  # schedule attaining it (may use fewer vehicles)
    exact: bool


@dataclass
class RegionTable:
    """Tabulated ``F_s`` for ``m = 0 .. len(points) - 1``."""

    region: int
    points: list[RegionPoint]
    floor: float  # lower bound on F_s(m) for every m <= M
    stats: dict = field(default_factory=dict)

    def value(self, m: int) -> float:
        return self.points[min(m, len(self.points) - 1)].value

    def trips(self, m: int) -> np.ndarray:
        return self.points[min(m, len(self.points) - 1)].trips


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= _RTOL * max(1.0, abs(a), abs(b))


class _MilpRegion:
    """Fixed-fleet SAA restricted to one region, solved exactly."""

    def __init__(self, instance: Instance, s: int, demands: np.ndarray, weights: np.ndarray, tighten: bool,
                 params: SolverParams):
        self.sub = instance.region_subinstance(s)  # the objective below carries no fixed-cost term
        model = LinearModel(f"region_saa[{s}]")
        self.fs = add_first_stage(model, self.sub, tighten)
        idx, val = [], []
        for r, d in enumerate(demands):
            svc = add_service(model, self.sub, 0, d, w_vars=self.fs.w[0], tag=str(r))
            i, v = service_objective(self.sub, 0, svc, weights[r])
            idx.append(i)
            val.append(v)
        model.set_objective("min", np.concatenate(idx), np.concatenate(val))
        self.model = model
        self.params = params

    def solve(self, m: int):
        mid = int(self.fs.m[0])
        self.model.set_bounds(mid, m, m)
        out = milp_solve(self.model, self.params)
        if not out.status.has_values:
            raise SolveFailed(f"region sub-problem (m={m}) ended with status {out.status.value}", out)
        w = round_integral(out.values[self.fs.w[0]], what="w")
        bound = out.best_bound if out.best_bound is not None else -np.inf
        return float(out.objective_value), w, out.status is Status.OPTIMAL, float(bound)


def _lp_floor(instance: Instance, s: int, demands: np.ndarray, weights: np.ndarray, params: SolverParams) -> float:
    """LP relaxation with the whole fleet bound available: a lower bound on every ``F_s(m)``."""
    sub = instance.region_subinstance(s)
    model = LinearModel(f"region_floor[{s}]")
    fs = add_first_stage(model, sub, tighten=False)
    idx, val = [], []
    for r, d in enumerate(demands):
        svc = add_service(model, sub, 0, d, w_vars=fs.w[0], tag=str(r))
        i, v = service_objective(sub, 0, svc, weights[r])
        idx.append(i)
        val.append(v)
    model.set_objective("min", np.concatenate(idx), np.concatenate(val))
    model.relax()
    out = milp_solve(model, params)
    if out.status is not Status.OPTIMAL:
        raise SolveFailed(f"region floor LP ended with status {out.status.value}", out)
    return float(out.objective_value)


def tabulate_region(instance: Instance, s: int, demands: np.ndarray, weights: np.ndarray,
                    subproblem: Subproblem | str = Subproblem.MILP, tighten: bool = True,
                    greedy: GreedyOptions = GreedyOptions(), params: SolverParams = SolverParams(),
                    max_fleet: int | None = None) -> RegionTable:
    """Tabulate ``F_s(m)`` from ``m = 0`` until a larger fleet cannot lower ``f_s m + F_s(m)``.

    Stops at the first ``m`` with ``f_s (m + 1) + floor >= best`` or with
    ``F_s(m)`` already at the floor (for the greedy sub-problem: at the
    value reached with the whole bound).
    """
    sub = Subproblem(subproblem)
    M = instance.fleet_bound if max_fleet is None else int(max_fleet)
    f = float(instance.fixed_costs[s])
    demands = np.asarray(demands, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if sub is Subproblem.MILP:
        solver = _MilpRegion(instance, s, demands, weights, tighten, params)
        top_value, _, top_exact, bound = solver.solve(M)
        floor = top_value if top_exact else bound

        def evaluate(m):
            return solver.solve(m)[:3]
    else:
        # the dispatcher is a heuristic; its once-per-train rule for multi-stop routes stays on
        sched = RegionScheduler(instance, s, greedy, True, params)
        floor = _lp_floor(instance, s, demands, weights, params)
        top = sched.choose(M, demands, weights)
        top_value = top.value

        def evaluate(m):
            ch = sched.choose(m, demands, weights)
            return ch.value, ch.trips, False

    points: list[RegionPoint] = []
    best_total = np.inf
    n_eval = 0
    for m in range(M + 1):
        value, trips, exact = evaluate(m)
        n_eval += 1
        if points and points[-1].value <= value:
            prev = points[-1]
            value, trips, exact = prev.value, prev.trips, prev.exact
        points.append(RegionPoint(m, value, trips, exact))
        best_total = min(best_total, f * m + value)
        if f * (m + 1) + floor >= best_total - _RTOL * max(1.0, abs(best_total)):
            break
        if value <= top_value or _close(value, top_value) or _close(value, floor):
            break
    return RegionTable(s, points, floor, {"evaluations": n_eval, "top_value": top_value})


def allocate(instance: Instance, tables: list[RegionTable]) -> tuple[list[int], float]:
    """Split the fleet bound across regions minimizing ``sum f_s m_s + F_s(m_s)``.

    Among optimal splits the smallest total fleet is returned, then the
    lexicographically smallest fleet vector.
    """
    M = instance.fleet_bound
    f = instance.fixed_costs
    S = len(tables)
    # cost[b] = best cost of regions s.. with b vehicles still allowed
    INF = np.inf
    nxt = np.zeros(M + 1)
    nxt_fleet = np.zeros(M + 1, dtype=np.int64)
    choice = []
    for s in range(S - 1, -1, -1):
        t = tables[s]
        top = len(t.points) - 1
        cur = np.full(M + 1, INF)
        cur_fleet = np.zeros(M + 1, dtype=np.int64)
        pick = np.zeros(M + 1, dtype=np.int64)
        for b in range(M + 1):
            for m in range(min(b, top) + 1):
                c = f[s] * m + t.value(m) + nxt[b - m]
                tot = m + nxt_fleet[b - m]
                better = c < cur[b] - _RTOL * max(1.0, abs(c))
                tie = not better and _close(c, cur[b]) and tot < cur_fleet[b]
                if better or tie:
                    cur[b], cur_fleet[b], pick[b] = c, tot, m
        choice.append(pick)
        nxt, nxt_fleet = cur, cur_fleet
    choice.reverse()
    fleet, b = [], M
    for s in range(S):
        m = int(choice[s][b])
        fleet.append(m)
        b -= m
    return fleet, float(nxt[M])


@dataclass
class RegionPlan:
    fleet: list[int]
    trips: list[np.ndarray]
    objective: float  # sum f m + F(m) at the chosen fleet
    exact: bool
    tables: list[RegionTable]


def plan_by_regions(instance: Instance, demands: list[np.ndarray], weights: np.ndarray,
                    subproblem: Subproblem | str = Subproblem.MILP, tighten: bool = True,
                    greedy: GreedyOptions = GreedyOptions(), params: SolverParams = SolverParams()) -> RegionPlan:
    """``demands[s]`` is the (R, trains, stops) scenario stack of region ``s``."""
    tables = [tabulate_region(instance, s, demands[s], weights, subproblem, tighten, greedy, params)
              for s in range(instance.n_regions)]
    fleet, value = allocate(instance, tables)
    trips = [t.trips(m) for t, m in zip(tables, fleet)]
    exact = all(p.exact for t in tables for p in t.points)
    return RegionPlan(fleet, trips, value, exact, tables)
