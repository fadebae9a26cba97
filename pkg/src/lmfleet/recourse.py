"""Second-stage problems for a given first-stage decision and demand realization.

* fixed schedule: trips ``w`` are given, passengers are assigned (an LP)
* dynamic routing: only fleet sizes ``m`` are given; trips are re-planned
  for the realized demand (a MILP per region, regions are independent, or
  the dispatch heuristic of :mod:`.dispatch` scored by the exact LP)

The dual of the fixed-schedule LP is built as its own model so that strong
duality can be checked against an independent solve.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blocks import add_first_stage, add_service, extract_plan, service_objective
from .domain import (
    DemandScenario,
    FirstStageSolution,
    Instance,
    SecondStagePlan,
    first_stage_from_trips,
)
from .dispatch import GreedyOptions, RegionScheduler
from .errors import SolveFailed
from .milp import LinearModel, ReusableLp, SolveOutcome, SolverParams, Status, VarKind, round_integral
from .milp import solve as milp_solve


class RecourseError(SolveFailed):
    pass


@dataclass(frozen=True, eq=False)
class DualCertificate:
    gamma: tuple[np.ndarray, ...]  # per region (I, J)
    psi: tuple[np.ndarray, ...]  # per region (I, K), <= 0
    value: float


def _build_fixed(instance: Instance, first_stage: FirstStageSolution, demand: tuple[np.ndarray, ...]):
    model = LinearModel("recourse_fixed")
    services = []
    obj_idx, obj_val = [], []
    for s in range(instance.n_regions):
        svc = add_service(model, instance, s, demand[s], w_values=first_stage.trips[s])
        services.append(svc)
        i, v = service_objective(instance, s, svc)
        obj_idx.append(i)
        obj_val.append(v)
    model.set_objective("min", np.concatenate(obj_idx), np.concatenate(obj_val))
    return model, services


def _check_first_stage(instance: Instance, first_stage: FirstStageSolution) -> None:
    # raises ValueError when the trips do not fit the fleet
    first_stage_from_trips(instance, first_stage.fleet, first_stage.trips)


def solve_recourse_fixed(instance: Instance, first_stage: FirstStageSolution, scenario: DemandScenario,
                         params: SolverParams = SolverParams()) -> SecondStagePlan:
    """Optimal passenger assignment for fixed trips; value ``Q(m, w, xi)``."""
    scenario.check(instance)
    _check_first_stage(instance, first_stage)
    model, services = _build_fixed(instance, first_stage, scenario.demand)
    out = milp_solve(model, params)
    if out.status is not Status.OPTIMAL:
        raise RecourseError(f"recourse LP ended with status {out.status.value}", out)
    return extract_plan(out, services, instance, out.objective_value)


class FixedRecourseEvaluator:
    """Solves the fixed-schedule LP for many scenarios on one loaded model."""

    def __init__(self, instance: Instance, first_stage: FirstStageSolution,
                 params: SolverParams = SolverParams()):
        _check_first_stage(instance, first_stage)
        self.instance = instance
        zero = tuple(np.zeros((r.num_trains, r.num_stops)) for r in instance.regions)
        self.model, self.services = _build_fixed(instance, first_stage, zero)
        self._rows = np.concatenate([svc.balance_rows.ravel() for svc in self.services])
        self._lp = ReusableLp(self.model, params)

    def solve(self, scenario: DemandScenario) -> SecondStagePlan:
        n = np.concatenate([d.ravel() for d in scenario.demand])
        if n.shape != self._rows.shape:
            raise ValueError("scenario does not match the instance")
        self._lp.set_row_bounds(self._rows, n, n)
        out = self._lp.solve()
        if out.status is not Status.OPTIMAL:
            raise RecourseError(f"recourse LP ended with status {out.status.value}", out)
        return extract_plan(out, self.services, self.instance, out.objective_value)


def dual_certificate(instance: Instance, first_stage: FirstStageSolution, scenario: DemandScenario,
                     params: SolverParams = SolverParams()) -> DualCertificate:
    """Solve the dual of the fixed-schedule LP directly.

    max  sum n*gamma + sum c*w*psi
    s.t. gamma[i] - gamma[i+1] <= beta_w*h     (gamma[I] = 0; the last train also
                                                 carries the terminal penalty)
         gamma[i,j] + psi[i,k] <= t_jk*beta_r  for every served (j, k)
         psi <= 0, gamma free
    """
    scenario.check(instance)
    c = instance.costs
    h = instance.headway_minutes
    cap = instance.vehicle_capacity
    model = LinearModel("recourse_dual")
    gammas, psis = [], []
    obj_i, obj_v = [], []
    for s, reg in enumerate(instance.regions):
        I, J, K = reg.num_trains, reg.num_stops, reg.num_routes
        g = np.array([[model.add_var(f"gamma[{i},{j},{s}]", VarKind.CONTINUOUS, -np.inf, np.inf)
                       for j in range(J)] for i in range(I)], dtype=np.int64).reshape(I, J)
        p = np.array([[model.add_var(f"psi[{i},{reg.routes[k].route_id},{s}]", VarKind.CONTINUOUS, -np.inf, 0.0)
                       for k in range(K)] for i in range(I)], dtype=np.int64).reshape(I, K)
        gammas.append(g)
        psis.append(p)
        obj_i += [g.ravel(), p.ravel()]
        obj_v += [scenario.demand[s].ravel(), cap * np.asarray(first_stage.trips[s], float).ravel()]
        for i in range(I):
            for j in range(J):
                if i + 1 < I:
                    model.add_constraint([g[i, j], g[i + 1, j]], [1.0, -1.0], "<=", c.wait_weight * h)
                else:
                    model.add_constraint([g[i, j]], [1.0], "<=", c.wait_weight * h + c.terminal_backlog_penalty)
            for j, k in reg.served_pairs:
                model.add_constraint([g[i, j], p[i, k]], [1.0, 1.0], "<=", reg.stop_times[j, k] * c.ride_weight)
    model.set_objective("max", np.concatenate(obj_i), np.concatenate(obj_v))
    out = milp_solve(model, params)
    if out.status is not Status.OPTIMAL:
        raise RecourseError(f"dual LP ended with status {out.status.value}", out)
    x = out.values
    return DualCertificate(tuple(x[g] for g in gammas), tuple(np.minimum(x[p], 0.0) for p in psis),
                           out.objective_value)


def check_dual_feasible(instance: Instance, cert: DualCertificate, tol: float = 1e-7) -> bool:
    c = instance.costs
    h = instance.headway_minutes
    for s, reg in enumerate(instance.regions):
        g, p = cert.gamma[s], cert.psi[s]
        nxt = np.vstack([g[1:], np.zeros((1, g.shape[1]))])
        lim = np.full(g.shape, c.wait_weight * h)
        lim[-1] += c.terminal_backlog_penalty
        if np.any(g - nxt > lim + tol) or np.any(p > tol):
            return False
        for j, k in reg.served_pairs:
            if np.any(g[:, j] + p[:, k] > reg.stop_times[j, k] * c.ride_weight + tol):
                return False
    return True


def dual_value(instance: Instance, first_stage: FirstStageSolution, scenario: DemandScenario,
               cert: DualCertificate) -> float:
    """``sum n*gamma + sum c*w*psi`` recomputed from the certificate."""
    cap = instance.vehicle_capacity
    return float(sum((scenario.demand[s] * cert.gamma[s]).sum()
                     + cap * (np.asarray(first_stage.trips[s]) * cert.psi[s]).sum()
                     for s in range(instance.n_regions)))


class _DynamicRegion:
    def __init__(self, instance: Instance, s: int, fleet: int, tighten: bool, params: SolverParams):
        self.sub = instance.region_subinstance(s, fleet)
        reg = self.sub.regions[0]
        model = LinearModel(f"recourse_dynamic[{s}]")
        self.fs = add_first_stage(model, self.sub, tighten, fixed_fleet=[fleet])
        self.svc = add_service(model, self.sub, 0, np.zeros((reg.num_trains, reg.num_stops)),
                               w_vars=self.fs.w[0])
        idx, val = service_objective(self.sub, 0, self.svc)
        model.set_objective("min", idx, val)
        self.model = model
        self.fleet = fleet
        self.params = params
        self._lp = ReusableLp(model, params)

    def solve(self, demand: np.ndarray):
        n = np.asarray(demand, dtype=float).ravel()
        self._lp.set_row_bounds(self.svc.balance_rows.ravel(), n, n)
        out = self._lp.solve()
        if not out.status.has_values:
            raise RecourseError(f"dynamic recourse ended with status {out.status.value}", out)
        w = round_integral(out.values[self.fs.w[0]], what="w")
        return out, w


class _GreedyRegion:
    def __init__(self, instance: Instance, s: int, fleet: int, tighten: bool, params: SolverParams,
                 opts: GreedyOptions, reference):
        self.sched = RegionScheduler(instance, s, opts, tighten, params)
        self.fleet = fleet
        self.extra = () if reference is None else (np.asarray(reference, dtype=np.int64),)

    def solve(self, demand: np.ndarray):
        ch = self.sched.choose(self.fleet, demand, extra=self.extra)
        z, u, value = self.sched.lp.plan(ch.trips, demand)
        out = SolveOutcome(Status.FEASIBLE, value, None, None, 0.0, f"candidate {ch.candidate}", "dispatch")
        return out, ch.trips, z, u


class DynamicRecourseEvaluator:
    """Re-plans trips per scenario with the fleet sizes held fixed.

    ``method="milp"`` solves each region exactly. ``method="greedy"`` uses
    the dispatch heuristic; with ``reference`` (a first-stage solution whose
    fleet matches) its planned trips are also tried, so the result is never
    worse than keeping the plan.
    """

    def __init__(self, instance: Instance, fleet, tighten: bool = True,
                 params: SolverParams = SolverParams(), method: str = "milp",
                 greedy: GreedyOptions = GreedyOptions(), reference: FirstStageSolution | None = None):
        fleet = [int(x) for x in fleet]
        if len(fleet) != instance.n_regions or min(fleet) < 0:
            raise ValueError("fleet must give a nonnegative size per region")
        if sum(fleet) > instance.fleet_bound:
            raise ValueError(f"total fleet {sum(fleet)} exceeds bound {instance.fleet_bound}")
        if method not in ("milp", "greedy"):
            raise ValueError(f"unknown method {method!r}")
        self.instance = instance
        self.fleet = tuple(fleet)
        self.method = method
        if method == "milp":
            self._regions = [_DynamicRegion(instance, s, m, tighten, params) for s, m in enumerate(fleet)]
        else:
            if reference is not None:
                _check_first_stage(instance, reference)
                if tuple(reference.fleet) != self.fleet:
                    raise ValueError("reference fleet differs from the evaluated fleet")
            self._regions = [_GreedyRegion(instance, s, m, tighten, params, greedy,
                                           None if reference is None else reference.trips[s])
                             for s, m in enumerate(fleet)]

    def solve(self, scenario: DemandScenario) -> tuple[FirstStageSolution, SecondStagePlan, list[SolveOutcome]]:
        trips, zs, us, outs = [], [], [], []
        total = 0.0
        if self.method == "greedy":
            for s, region in enumerate(self._regions):
                out, w, z, u = region.solve(scenario.demand[s])
                trips.append(w)
                zs.append(z)
                us.append(u)
                outs.append(out)
                total += out.objective_value
            fs = first_stage_from_trips(self.instance, self.fleet, trips)
            return fs, SecondStagePlan(tuple(zs), tuple(us), total), outs
        for s, region in enumerate(self._regions):
            out, w = region.solve(scenario.demand[s])
            plan = extract_plan(out, [region.svc], region.sub, out.objective_value)
            trips.append(w)
            zs.append(plan.assignments[0])
            us.append(plan.backlog[0])
            outs.append(out)
            total += out.objective_value
        fs = first_stage_from_trips(self.instance, self.fleet, trips)
        return fs, SecondStagePlan(tuple(zs), tuple(us), total), outs


def solve_recourse_dynamic(instance: Instance, fleet, scenario: DemandScenario, tighten: bool = True,
                           params: SolverParams = SolverParams(), method: str = "milp"):
    """Jointly choose trips and assignments for the realized demand, fleet sizes fixed.

    Returns ``(trips, plan)`` where ``trips`` is the re-planned per-region
    ``w`` and ``plan.objective_value`` the summed second-stage cost.
    """
    scenario.check(instance)
    fs, plan, outs = DynamicRecourseEvaluator(instance, fleet, tighten, params, method).solve(scenario)
    return fs.trips, plan
