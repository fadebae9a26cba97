"""Experiment protocol: out-of-sample evaluation, MCO gap estimates and sensitivity sweeps.

All randomness is derived from one root seed through :func:`derive_seed`,
and scenario batches are split into contiguous chunks whose results are
reassembled in index order, so outputs do not depend on ``threads``.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist

import numpy as np

from .dispatch import GreedyOptions
from .domain import CostParams, FirstStageSolution, Instance, second_stage_cost
from .dr import DrOptions, solve_dr
from .errors import SolveFailed
from .io import rows_to_csv
from .milp import SolverParams, Status
from .recourse import DynamicRecourseEvaluator, FixedRecourseEvaluator
from .scenarios import DemandSpec, draw_means, estimate_ambiguity, gen_scenarios
from .sp import SaaOptions, solve_sp

MODES = ("fixed_w", "dynamic_w")
STATS = ("mean", "median", "q75", "q95")


def derive_seed(*keys: int) -> int:
    """A 63-bit seed determined by ``keys`` (order matters)."""
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(2, np.uint64)[0] >> np.uint64(1))


def quantile(x, q):
    return np.quantile(np.asarray(x, dtype=float), q, axis=0, method="linear")


# -- evaluation -------------------------------------------------------------

@dataclass(eq=False)
class EvaluationReport:
    columns: tuple[str, ...]
    rows: np.ndarray  # (N, len(columns)); first column is the scenario id
    meta: dict = field(default_factory=dict)
    complete: bool = True

    @property
    def n_regions(self) -> int:
        return sum(c.startswith("TWT_") for c in self.columns)

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    def aggregates(self) -> dict[str, dict[str, float]]:
        out = {}
        for c in self.columns[1:]:
            x = self.column(c)
            if x.size == 0:
                out[c] = {k: math.nan for k in STATS}
                continue
            out[c] = {"mean": float(x.mean()), "median": float(quantile(x, 0.5)),
                      "q75": float(quantile(x, 0.75)), "q95": float(quantile(x, 0.95))}
        return out

    def total_waiting(self) -> np.ndarray:
        return sum(self.column(f"TWT_{s}") for s in range(self.n_regions))

    def rows_csv(self) -> str:
        return rows_to_csv(self.columns, self.rows.tolist())

    def aggregates_csv(self) -> str:
        agg = self.aggregates()
        return rows_to_csv(("column",) + STATS, [[c] + [agg[c][k] for k in STATS] for c in self.columns[1:]])

    def summary_markdown(self) -> str:
        m = self.meta
        lines = [f"### {m.get('model', 'solution')} ({m.get('mode', '?')}, N'={len(self.rows)})", ""]
        if not self.complete:
            lines += ["**incomplete: evaluation aborted early**", ""]
        lines += ["| column | " + " | ".join(STATS) + " |", "|---" * (len(STATS) + 1) + "|"]
        for c, a in self.aggregates().items():
            lines.append(f"| {c} | " + " | ".join(f"{a[k]:.2f}" for k in STATS) + " |")
        return "\n".join(lines) + "\n"


class EvaluationAborted(RuntimeError):
    def __init__(self, message: str, partial: EvaluationReport):
        super().__init__(message)
        self.partial = partial


def _columns(instance: Instance) -> tuple[str, ...]:
    S = instance.n_regions
    return ("scenario_id", "TC", "second_stage") + tuple(f"TWT_{s}" for s in range(S)) + \
        tuple(f"TRT_{s}" for s in range(S))


def _chunks(n: int, parts: int) -> list[range]:
    parts = max(1, min(parts, n))
    bounds = np.linspace(0, n, parts + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def evaluate(instance: Instance, solution: FirstStageSolution, scenarios, mode: str = "fixed_w", *,
             dynamic_method: str = "milp", greedy: GreedyOptions = GreedyOptions(), tighten: bool = True,
             params: SolverParams = SolverParams(), threads: int = 1, meta: dict | None = None) -> EvaluationReport:
    """One recourse solve per scenario; ``TC = fixed cost + second-stage cost`` per row.

    ``fixed_w`` keeps the planned trips; ``dynamic_w`` keeps only the fleet
    sizes and re-plans trips per scenario (``dynamic_method`` = ``"milp"`` or
    ``"greedy"``; the greedy evaluator also tries the planned trips).
    Raises :class:`EvaluationAborted` carrying the rows finished before a
    solver failure.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    scenarios = list(scenarios)
    for sc in scenarios:
        sc.check(instance)
    fixed = float(instance.fixed_costs @ np.asarray(solution.fleet, dtype=float))
    cols = _columns(instance)
    info = {"mode": mode, "n_scenarios": len(scenarios), "fleet": list(solution.fleet),
            "fixed_cost": fixed}
    if mode == "dynamic_w":
        info["dynamic_method"] = dynamic_method
    info.update(meta or {})

    def run(idx: range):
        if mode == "fixed_w":
            ev = FixedRecourseEvaluator(instance, solution, params)
            solve = ev.solve
        else:
            ev = DynamicRecourseEvaluator(instance, solution.fleet, tighten, params, dynamic_method, greedy,
                                          reference=solution if dynamic_method == "greedy" else None)
            solve = lambda sc: ev.solve(sc)[1]  # noqa: E731
        out = []
        for r in idx:
            try:
                plan = solve(scenarios[r])
            except SolveFailed as exc:
                return out, f"scenario {r}: {exc}"
            br = second_stage_cost(instance, plan)
            ss = float(plan.objective_value)
            out.append([r, fixed + ss, ss, *br.wait_minutes, *br.ride_minutes])
        return out, None

    chunks = _chunks(len(scenarios), threads)
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, chunks))
    else:
        results = [run(c) for c in chunks]
    rows, error = [], None
    for part, err in results:
        rows.extend(part)
        if err is not None:
            error = error or err
            break  # later chunks are dropped so the partial file is a clean prefix
    report = EvaluationReport(cols, np.array(rows, dtype=float).reshape(len(rows), len(cols)), info, error is None)
    if error is not None:
        raise EvaluationAborted(error, report)
    return report


# -- planning configuration -------------------------------------------------

@dataclass(frozen=True)
class PlanConfig:
    """How each model is solved inside experiments."""

    sp: SaaOptions = SaaOptions()
    dr: DrOptions = DrOptions()
    params: SolverParams = SolverParams()
    q_lo: float = 0.20
    q_hi: float = 0.80

    @classmethod
    def fast(cls, params: SolverParams = SolverParams()) -> "PlanConfig":
        """Region-by-region planning with heuristic sub-problems."""
        return cls(SaaOptions(method="region_dp", subproblem="greedy"),
                   DrOptions(method="region_dp", subproblem="greedy"), params)


def plan_models(instance: Instance, in_sample, cfg: PlanConfig, models=("SP", "DR")):
    """Solve each requested model on the same in-sample scenarios; returns ``{model: result}``."""
    out = {}
    if "SP" in models:
        out["SP"] = solve_sp(instance, in_sample, cfg.sp, cfg.params)
    if "DR" in models:
        amb = estimate_ambiguity(in_sample, cfg.q_lo, cfg.q_hi)
        out["DR"] = solve_dr(instance, amb, cfg.dr, cfg.params)
    return out


# -- MCO gap ----------------------------------------------------------------

@dataclass(frozen=True)
class McoReport:
    lower_bound: float
    lower_ci: tuple[float, float]
    upper_bound: float
    upper_ci: tuple[float, float]
    gap: float
    confidence: float
    replication_values: tuple[float, ...]
    candidate_fleet: tuple[int, ...]
    degraded: bool

    def to_dict(self) -> dict:
        return {"lower_bound": self.lower_bound, "lower_ci": list(self.lower_ci), "upper_bound": self.upper_bound,
                "upper_ci": list(self.upper_ci), "gap": self.gap, "confidence": self.confidence,
                "replication_values": list(self.replication_values), "candidate_fleet": list(self.candidate_fleet),
                "degraded": self.degraded}

    def summary_markdown(self) -> str:
        return (f"### MCO gap\n\n| quantity | estimate | CI ({self.confidence:.0%}) |\n|---|---|---|\n"
                f"| lower bound | {self.lower_bound:.4f} | [{self.lower_ci[0]:.4f}, {self.lower_ci[1]:.4f}] |\n"
                f"| upper bound | {self.upper_bound:.4f} | [{self.upper_ci[0]:.4f}, {self.upper_ci[1]:.4f}] |\n"
                f"| relative gap | {self.gap:.4%} | |\n"
                + ("\n**degraded: a replication was not solved to optimality**\n" if self.degraded else ""))


def _ci(x: np.ndarray, z: float) -> tuple[float, tuple[float, float]]:
    mean = float(x.mean())
    half = z * float(x.std(ddof=1)) / math.sqrt(len(x)) if len(x) > 1 else 0.0
    return mean, (mean - half, mean + half)


def mco_gap(instance: Instance, spec: DemandSpec, n_scenarios: int, replications: int = 10,
            n_eval: int = 10_000, seed: int = 0, cfg: PlanConfig = PlanConfig(), confidence: float = 0.95,
            threads: int = 1) -> McoReport:
    """Replication lower bound and independent-sample upper bound for the SAA.

    The means are drawn once from ``spec``; replication ``g`` solves the SAA on
    its own ``n_scenarios`` draws. The upper bound evaluates replication 0's
    solution (fixed trips) on ``n_eval`` fresh draws.
    """
    if replications < 2:
        raise ValueError("at least two replications are needed")
    z = NormalDist().inv_cdf(0.5 + confidence / 2)
    mu = draw_means(instance, spec)
    values, degraded, cand = [], False, None
    for g in range(replications):
        sc = gen_scenarios(instance, mu, replace(spec, seed=derive_seed(seed, 1, g)), n_scenarios, threads)
        res = solve_sp(instance, sc, cfg.sp, cfg.params)
        degraded |= res.outcome.status is not Status.OPTIMAL
        values.append(res.objective_value)
        if g == 0:
            cand = res.first_stage
    lb, lb_ci = _ci(np.array(values), z)
    ev = gen_scenarios(instance, mu, replace(spec, seed=derive_seed(seed, 2)), n_eval, threads)
    rep = evaluate(instance, cand, ev, "fixed_w", params=cfg.params, threads=threads)
    ub, ub_ci = _ci(rep.column("TC"), z)
    if lb > 0:
        gap = (ub - lb) / lb
    else:
        gap = 0.0 if ub <= 0 else math.inf
    return McoReport(lb, lb_ci, ub, ub_ci, gap, confidence, tuple(values), tuple(cand.fleet), degraded)


# -- sensitivity sweeps -----------------------------------------------------

SWEEP_COLUMNS = ("experiment", "mean_lo", "mean_hi", "fixed_cost", "beta_w", "beta_r", "fleet_bound", "model",
                 "metric", "value")


@dataclass(frozen=True)
class SweepGrid:
    mean_ranges: tuple[tuple[float, float], ...] = ((1.0, 4.0),)
    fixed_costs: tuple[float, ...] = (4000.0,)
    betas: tuple[tuple[float, float], ...] = ((2.0, 1.0),)
    fleet_bounds: tuple[int, ...] = (60,)

    def points(self):
        for mr in self.mean_ranges:
            for f in self.fixed_costs:
                for bw, br in self.betas:
                    for M in self.fleet_bounds:
                        yield (float(mr[0]), float(mr[1])), float(f), (float(bw), float(br)), int(M)


def sweep_point(template: Instance, spec: DemandSpec, point, n_scenarios: int, n_eval: int, seed: int,
                cfg: PlanConfig, mode: str = "dynamic_w", dynamic_method: str = "greedy",
                models=("SP", "DR"), threads: int = 1) -> dict:
    """Plan both models and evaluate them on shared scenarios; returns per-model results."""
    (lo, hi), f, (bw, br), M = point
    c = template.costs
    inst = template.with_costs(CostParams(f, bw, br, c.terminal_backlog_penalty)).with_fleet_bound(M)
    sp = replace(spec, mean_range=(lo, hi))
    mu = draw_means(inst, replace(sp, seed=derive_seed(seed, 3)))
    ins = gen_scenarios(inst, mu, replace(sp, seed=derive_seed(seed, 4)), n_scenarios, threads)
    plans = plan_models(inst, ins, cfg, models)
    out = {}
    ev_sc = gen_scenarios(inst, mu, replace(sp, seed=derive_seed(seed, 5)), n_eval, threads) if n_eval else []
    for name, res in plans.items():
        rep = evaluate(inst, res.first_stage, ev_sc, mode, dynamic_method=dynamic_method, params=cfg.params,
                       threads=threads, meta={"model": name}) if n_eval else None
        out[name] = (res, rep)
    return out


def sensitivity_sweep(template: Instance, spec: DemandSpec, grid: SweepGrid, n_scenarios: int, n_eval: int,
                      seed: int = 0, cfg: PlanConfig = PlanConfig(), mode: str = "dynamic_w",
                      dynamic_method: str = "greedy", models=("SP", "DR"), experiment: str = "sweep",
                      threads: int = 1) -> list[list]:
    """Long-format rows (see :data:`SWEEP_COLUMNS`); one pipeline run per grid point.

    Seeds depend on the root seed only, so every grid point and both models
    see the same means and scenarios. A failing point adds a ``status`` row
    and the sweep continues.
    """
    rows = []
    for point in grid.points():
        (lo, hi), f, (bw, br), M = point
        key = [experiment, lo, hi, f, bw, br, M]
        try:
            res = sweep_point(template, spec, point, n_scenarios, n_eval, seed, cfg, mode, dynamic_method,
                              models, threads)
        except (SolveFailed, EvaluationAborted, ValueError) as exc:
            for name in models:
                rows.append(key + [name, "status", f"failed: {exc}".replace("\n", " ")])
            continue
        for name in models:
            plan, rep = res[name]
            rows.append(key + [name, "status", plan.outcome.status.value])
            rows.append(key + [name, "total_fleet", plan.first_stage.total_fleet])
            for s, m in enumerate(plan.first_stage.fleet):
                rows.append(key + [name, f"fleet_{s}", m])
            rows.append(key + [name, "plan_objective", plan.objective_value])
            if rep is not None:
                agg = rep.aggregates()
                rows.append(key + [name, "avg_second_stage", agg["second_stage"]["mean"]])
                rows.append(key + [name, "avg_total_cost", agg["TC"]["mean"]])
                rows.append(key + [name, "avg_total_waiting", float(rep.total_waiting().mean())])
    return rows


def sweep_csv(rows) -> str:
    return rows_to_csv(SWEEP_COLUMNS, rows)


def sweep_markdown(rows) -> str:
    """Σm* table per grid point and model."""
    lines = ["| " + " | ".join(SWEEP_COLUMNS[1:8]) + " | total fleet | avg 2nd stage |", "|---" * 9 + "|"]
    table: dict[tuple, dict] = {}
    for r in rows:
        table.setdefault(tuple(r[1:8]), {})[r[8]] = r[9]
    for key, metrics in table.items():
        ss = metrics.get("avg_second_stage", "")
        ss = f"{ss:.2f}" if isinstance(ss, float) else ss
        lines.append("| " + " | ".join(str(k) for k in key) + f" | {metrics.get('total_fleet', '-')} | {ss} |")
    return "\n".join(lines) + "\n"

