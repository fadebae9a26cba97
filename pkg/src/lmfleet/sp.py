"""Sample average approximation of the two-stage fleet sizing problem.

``method="extensive"`` solves the extensive-form MILP. ``method="region_dp"``
tabulates each region's second-stage value as a function of its fleet size
and splits the fleet bound by dynamic programming (see :mod:`.regional`);
with ``subproblem="milp"`` this is exact, with ``"greedy"`` it is a fast
heuristic whose reported cost is still an attained value.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .blocks import FirstStageIndex, ServiceIndex, add_first_stage, add_service, extract_first_stage, service_objective
from .domain import DemandScenario, FirstStageSolution, Instance, first_stage_from_trips
from .errors import SolveFailed
from .milp import LinearModel, SolveOutcome, SolverParams, Status
from .milp import solve as milp_solve
from .dispatch import GreedyOptions
from .recourse import FixedRecourseEvaluator
from .regional import Subproblem, plan_by_regions

DECOMPOSITION_RTOL = 1e-5


@dataclass(frozen=True)
class SaaOptions:
    # Off by default: with several scenarios a repeated multi-stop trip can hedge
    # between demand patterns, so the binary restriction may cut off the optimum.
    apply_prop1_tightening: bool = False
    scenario_weights: tuple[float, ...] | None = None
    # With zero fixed cost, park unused vehicles in zero-cost regions (objective unchanged).
    fill_idle_vehicles: bool = True
    method: str = "extensive"  # or "region_dp"
    subproblem: Subproblem | str = Subproblem.MILP  # region_dp only
    greedy: GreedyOptions = GreedyOptions()

    def __post_init__(self):
        if self.method not in ("extensive", "region_dp"):
            raise ValueError(f"unknown method {self.method!r}")
        object.__setattr__(self, "subproblem", Subproblem(self.subproblem))

    def weights(self, n_scenarios: int) -> np.ndarray:
        if self.scenario_weights is None:
            return np.full(n_scenarios, 1.0 / n_scenarios)
        w = np.asarray(self.scenario_weights, dtype=float)
        if w.shape != (n_scenarios,):
            raise ValueError(f"{w.size} weights given for {n_scenarios} scenarios")
        if np.any(w < 0) or not math.isclose(w.sum(), 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError("scenario weights must be nonnegative and sum to 1")
        return w


@dataclass
class SaaIndex:
    first_stage: FirstStageIndex
    services: list[list[ServiceIndex]]  # [scenario][region]
    weights: np.ndarray


@dataclass(eq=False)
class SpResult:
    first_stage: FirstStageSolution
    outcome: SolveOutcome
    objective_value: float  # fixed cost + weighted recourse, re-evaluated at the returned solution
    scenario_costs: np.ndarray  # recourse value per scenario at the returned (m, w)
    fixed_cost: float
    extras: dict = field(default_factory=dict)


def _check_scenarios(instance: Instance, scenarios) -> list[DemandScenario]:
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("at least one scenario is required")
    for r, sc in enumerate(scenarios):
        try:
            sc.check(instance)
        except ValueError as exc:
            raise ValueError(f"scenario {r}: {exc}") from None
    return scenarios


def build_saa(instance: Instance, scenarios, opts: SaaOptions = SaaOptions()) -> tuple[LinearModel, SaaIndex]:
    scenarios = _check_scenarios(instance, scenarios)
    weights = opts.weights(len(scenarios))
    model = LinearModel("saa")
    fs = add_first_stage(model, instance, opts.apply_prop1_tightening)
    obj_idx = [fs.m]
    obj_val = [instance.fixed_costs.astype(float)]
    services = []
    for r, sc in enumerate(scenarios):
        row = []
        for s in range(instance.n_regions):
            svc = add_service(model, instance, s, sc.demand[s], w_vars=fs.w[s], tag=str(r))
            row.append(svc)
            i, v = service_objective(instance, s, svc, weights[r])
            obj_idx.append(i)
            obj_val.append(v)
        services.append(row)
    model.set_objective("min", np.concatenate(obj_idx), np.concatenate(obj_val))
    return model, SaaIndex(fs, services, weights)


def expected_counts(instance: Instance, n_scenarios: int, tighten: bool = False) -> dict[str, int]:
    """Closed-form variable and row counts of the extensive form."""
    S = instance.n_regions
    w = sum(r.num_trains * r.num_routes for r in instance.regions)
    v = sum(r.num_trains for r in instance.regions)
    u = n_scenarios * sum(r.num_trains * r.num_stops for r in instance.regions)
    z = n_scenarios * sum(r.num_trains * len(r.served_pairs) for r in instance.regions)
    binary = sum(r.num_trains * int(r.single_trip_routes.sum()) for r in instance.regions) if tighten else 0
    rows = 1 + v + u + n_scenarios * w
    return {"m": S, "w": w, "v": v, "u": u, "z": z, "binary": binary,
            "variables": S + w + v + u + z, "constraints": rows}


def fill_idle(instance: Instance, fs: FirstStageSolution) -> FirstStageSolution:
    """Hand out vehicles left under the bound, round-robin, to regions whose fixed cost is zero."""
    free = instance.fleet_bound - fs.total_fleet
    zero = [s for s in range(instance.n_regions) if instance.fixed_costs[s] == 0]
    if free <= 0 or not zero:
        return fs
    fleet = list(fs.fleet)
    for t in range(free):
        fleet[zero[t % len(zero)]] += 1
    return first_stage_from_trips(instance, fleet, fs.trips)


def recourse_costs(instance: Instance, fs: FirstStageSolution, scenarios, params: SolverParams) -> np.ndarray:
    ev = FixedRecourseEvaluator(instance, fs, params)
    return np.array([ev.solve(sc).objective_value for sc in scenarios])


def _finish(instance, scenarios, weights, outcome, fs, params, check: bool) -> SpResult:
    costs = recourse_costs(instance, fs, scenarios, params)
    fixed = float(instance.fixed_costs @ np.asarray(fs.fleet, dtype=float))
    value = fixed + float(weights @ costs)
    if check and outcome.status is Status.OPTIMAL:
        ref = outcome.objective_value
        if abs(value - ref) > DECOMPOSITION_RTOL * max(1.0, abs(ref)):
            raise AssertionError(
                f"objective {ref!r} does not decompose: fixed {fixed!r} + recourse {value - fixed!r}"
            )
    return SpResult(fs, outcome, value, costs, fixed)


def region_stacks(instance: Instance, scenarios) -> list[np.ndarray]:
    return [np.stack([sc.demand[s] for sc in scenarios]) for s in range(instance.n_regions)]


def _solve_by_regions(instance: Instance, scenarios, opts: SaaOptions, params: SolverParams) -> SpResult:
    weights = opts.weights(len(scenarios))
    start = time.perf_counter()
    plan = plan_by_regions(instance, region_stacks(instance, scenarios), weights, opts.subproblem,
                           opts.apply_prop1_tightening, opts.greedy, params)
    fs = first_stage_from_trips(instance, plan.fleet, plan.trips)
    status = Status.OPTIMAL if plan.exact else Status.FEASIBLE
    out = SolveOutcome(status, plan.objective, plan.objective if plan.exact else None, None,
                       time.perf_counter() - start, "region_dp", "region_dp")
    filled = fill_idle(instance, fs) if opts.fill_idle_vehicles else fs
    res = _finish(instance, scenarios, weights, out, filled, params, check=True)
    res.extras["region_tables"] = plan.tables
    if filled is not fs:
        res.extras["idle_filled"] = filled.total_fleet - fs.total_fleet
    return res


def solve_sp(instance: Instance, scenarios, opts: SaaOptions = SaaOptions(),
             params: SolverParams = SolverParams()) -> SpResult:
    """Solve the SAA and re-verify its objective by per-scenario recourse."""
    scenarios = _check_scenarios(instance, scenarios)
    if opts.method == "region_dp":
        return _solve_by_regions(instance, scenarios, opts, params)
    model, idx = build_saa(instance, scenarios, opts)
    out = milp_solve(model, params)
    if out.status is Status.INFEASIBLE:
        raise AssertionError("SAA reported infeasible although the zero plan is always feasible")
    if not out.status.has_values:
        raise SolveFailed(f"SAA solve ended with status {out.status.value}: {out.message}", out)
    fs = extract_first_stage(out, idx.first_stage, instance)
    filled = fill_idle(instance, fs) if opts.fill_idle_vehicles else fs
    res = _finish(instance, scenarios, idx.weights, out, filled, params, check=True)
    if filled is not fs:
        res.extras["idle_filled"] = filled.total_fleet - fs.total_fleet
    return res
