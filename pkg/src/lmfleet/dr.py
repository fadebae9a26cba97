"""Distributionally robust fleet sizing over a mean-support ambiguity set.

The worst case over the support box is attained at its upper corner, so the
robust model is a single MILP whose service rows use the upper bounds as
right-hand sides. The mean enters only through the multipliers ``rho``,
which appear in no constraint: left free, the model is unbounded as soon as
one cell has ``mean < upper``. ``rho_mode="fixed_zero"`` pins them at zero.

As for the SAA, ``method="region_dp"`` solves the single worst-case scenario
region by region and splits the fleet bound by dynamic programming.
"""

from __future__ import annotations

import enum
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .blocks import FirstStageIndex, ServiceIndex, add_first_stage, add_service, extract_first_stage, \
    extract_plan, service_objective
from .domain import DemandScenario, FirstStageSolution, Instance, SecondStagePlan
from .errors import SolveFailed
from .milp import LinearModel, SolveOutcome, SolverParams, Status, VarKind
from .milp import solve as milp_solve
from .dispatch import GreedyOptions
from .domain import first_stage_from_trips
from .regional import Subproblem, plan_by_regions
from .recourse import FixedRecourseEvaluator
from .sp import DECOMPOSITION_RTOL, fill_idle, recourse_costs


class AmbiguityWarning(UserWarning):
    pass


class RhoMode(str, enum.Enum):
    FIXED_ZERO = "fixed_zero"
    FREE_NONNEGATIVE = "free_nonnegative"


@dataclass(frozen=True, eq=False)
class AmbiguityInfo:
    """Per-cell mean and support ``[lower, upper]``; one (trains, stops) array per region."""

    mean: tuple[np.ndarray, ...]
    lower: tuple[np.ndarray, ...]
    upper: tuple[np.ndarray, ...]

    def __post_init__(self):
        conv = lambda xs: tuple(np.array(x, dtype=float) for x in xs)  # noqa: E731
        object.__setattr__(self, "mean", conv(self.mean))
        object.__setattr__(self, "lower", conv(self.lower))
        object.__setattr__(self, "upper", conv(self.upper))
        if not (len(self.mean) == len(self.lower) == len(self.upper)):
            raise ValueError("mean, lower and upper must cover the same regions")
        outside = 0
        for s, (mu, lo, hi) in enumerate(zip(self.mean, self.lower, self.upper)):
            if not (mu.shape == lo.shape == hi.shape) or mu.ndim != 2:
                raise ValueError(f"region {s}: mean/lower/upper shapes differ")
            for a in (mu, lo, hi):
                if not np.all(np.isfinite(a)) or np.any(a < 0):
                    raise ValueError(f"region {s}: ambiguity values must be finite and nonnegative")
            if np.any(lo > hi):
                i, j = np.argwhere(lo > hi)[0]
                raise ValueError(f"lower > upper at (train {i}, stop {j}, region {s})")
            outside += int(np.count_nonzero((mu < lo) | (mu > hi)))
        if outside:
            warnings.warn(f"{outside} cell(s) have a mean outside [lower, upper]", AmbiguityWarning, stacklevel=3)

    def check(self, instance: Instance) -> None:
        DemandScenario(self.upper).check(instance)
        DemandScenario(self.lower).check(instance)
        DemandScenario(self.mean).check(instance)

    def upper_scenario(self) -> DemandScenario:
        return DemandScenario(self.upper)


@dataclass(frozen=True)
class DrOptions:
    rho_mode: RhoMode | str = RhoMode.FIXED_ZERO
    fill_idle_vehicles: bool = True
    method: str = "milp"  # or "region_dp"
    subproblem: Subproblem | str = Subproblem.MILP
    greedy: GreedyOptions = GreedyOptions()

    def __post_init__(self):
        object.__setattr__(self, "rho_mode", RhoMode(self.rho_mode))
        object.__setattr__(self, "subproblem", Subproblem(self.subproblem))
        if self.method not in ("milp", "region_dp"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class DrIndex:
    first_stage: FirstStageIndex
    services: list[ServiceIndex]
    rho: list[np.ndarray]  # per region (I, J)
    rho_coef: list[np.ndarray]


@dataclass(eq=False)
class DrResult:
    first_stage: FirstStageSolution
    outcome: SolveOutcome
    objective_value: float
    worst_case_plan: SecondStagePlan
    fixed_cost: float
    extras: dict = field(default_factory=dict)


def build_dr(instance: Instance, amb: AmbiguityInfo, opts: DrOptions = DrOptions()) -> tuple[LinearModel, DrIndex]:
    amb.check(instance)
    model = LinearModel("dr")
    fs = add_first_stage(model, instance, tighten=True)
    rho_ub = 0.0 if opts.rho_mode is RhoMode.FIXED_ZERO else np.inf
    obj_idx = [fs.m]
    obj_val = [instance.fixed_costs.astype(float)]
    services, rhos, coefs = [], [], []
    for s, reg in enumerate(instance.regions):
        rho = np.array([[model.add_var(f"rho[{i},{j},{s}]", VarKind.CONTINUOUS, 0.0, rho_ub)
                         for j in range(reg.num_stops)] for i in range(reg.num_trains)], dtype=np.int64)
        coef = amb.mean[s] - amb.upper[s]
        rhos.append(rho)
        coefs.append(coef)
        obj_idx.append(rho.ravel())
        obj_val.append(coef.ravel())
    for s in range(instance.n_regions):
        svc = add_service(model, instance, s, amb.upper[s], w_vars=fs.w[s], u_name="y", z_name="x",
                          inequality=True)
        services.append(svc)
        i, v = service_objective(instance, s, svc)
        obj_idx.append(i)
        obj_val.append(v)
    model.set_objective("min", np.concatenate(obj_idx), np.concatenate(obj_val))
    return model, DrIndex(fs, services, rhos, coefs)


def most_negative_rho(index: DrIndex | AmbiguityInfo) -> tuple[int, int, int, float]:
    """``(train, stop, region, coefficient)`` of the steepest unbounded direction."""
    if isinstance(index, AmbiguityInfo):
        coefs = [mu - hi for mu, hi in zip(index.mean, index.upper)]
    else:
        coefs = index.rho_coef
    best = (0, 0, 0, 0.0)
    for s, coef in enumerate(coefs):
        if coef.size:
            i, j = np.unravel_index(int(np.argmin(coef)), coef.shape)
            if coef[i, j] < best[3]:
                best = (int(i), int(j), s, float(coef[i, j]))
    return best


def _unbounded(where: tuple[int, int, int, float], out: SolveOutcome) -> SolveFailed:
    i, j, s, c = where
    return SolveFailed(f"DR model unbounded: rho[{i},{j},{s}] has objective coefficient {c:g} (mean < upper) "
                       f"and appears in no constraint", out)


def _solve_by_regions(instance: Instance, amb: AmbiguityInfo, opts: DrOptions, params: SolverParams) -> DrResult:
    amb.check(instance)
    start = time.perf_counter()
    if opts.rho_mode is RhoMode.FREE_NONNEGATIVE:
        where = most_negative_rho(amb)
        if where[3] < 0:
            out = SolveOutcome(Status.UNBOUNDED, None, None, None, time.perf_counter() - start,
                               "rho ray", "region_dp")
            raise _unbounded(where, out)
    demands = [hi[None] for hi in amb.upper]
    plan = plan_by_regions(instance, demands, np.ones(1), opts.subproblem, True, opts.greedy, params)
    fs = first_stage_from_trips(instance, plan.fleet, plan.trips)
    status = Status.OPTIMAL if plan.exact else Status.FEASIBLE
    out = SolveOutcome(status, plan.objective, plan.objective if plan.exact else None, None,
                       time.perf_counter() - start, "region_dp", "region_dp")
    filled = fill_idle(instance, fs) if opts.fill_idle_vehicles else fs
    fixed = float(instance.fixed_costs @ np.asarray(filled.fleet, dtype=float))
    ev = FixedRecourseEvaluator(instance, filled, params)
    worst_plan = ev.solve(amb.upper_scenario())
    value = fixed + worst_plan.objective_value
    if plan.exact and abs(value - plan.objective) > DECOMPOSITION_RTOL * max(1.0, abs(plan.objective)):
        raise AssertionError(f"DR objective {plan.objective!r} != fixed + worst-case recourse {value!r}")
    res = DrResult(filled, out, value, worst_plan, fixed, {"region_tables": plan.tables})
    if filled is not fs:
        res.extras["idle_filled"] = filled.total_fleet - fs.total_fleet
    return res


def solve_dr(instance: Instance, amb: AmbiguityInfo, opts: DrOptions = DrOptions(),
             params: SolverParams = SolverParams()) -> DrResult:
    if opts.method == "region_dp":
        return _solve_by_regions(instance, amb, opts, params)
    model, idx = build_dr(instance, amb, opts)
    out = milp_solve(model, params)
    if out.status is Status.UNBOUNDED:
        raise _unbounded(most_negative_rho(idx), out)
    if out.status is Status.INFEASIBLE:
        raise AssertionError("DR model reported infeasible although the zero plan is always feasible")
    if not out.status.has_values:
        raise SolveFailed(f"DR solve ended with status {out.status.value}: {out.message}", out)
    fs = extract_first_stage(out, idx.first_stage, instance)
    plan = extract_plan(out, idx.services, instance, out.objective_value)
    filled = fill_idle(instance, fs) if opts.fill_idle_vehicles else fs
    fixed = float(instance.fixed_costs @ np.asarray(filled.fleet, dtype=float))
    worst = float(recourse_costs(instance, filled, [amb.upper_scenario()], params)[0])
    rho_term = float(sum((c * out.values[r]).sum() for c, r in zip(idx.rho_coef, idx.rho)))
    value = fixed + rho_term + worst
    if out.status is Status.OPTIMAL:
        ref = out.objective_value
        if abs(value - ref) > DECOMPOSITION_RTOL * max(1.0, abs(ref)):
            raise AssertionError(f"DR objective {ref!r} != fixed + rho + worst-case recourse {value!r}")
    res = DrResult(filled, out, value, plan, fixed)
    if filled is not fs:
        res.extras["idle_filled"] = filled.total_fleet - fs.total_fleet
    return res
