"""Command-line entry point: ``lmfleet <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver failure.
Errors are printed to stderr as one JSON line
``{"error": <kind>, "exit_code": <n>, "message": <text>}``.

Option values come from command-line flags, then from ``--config`` (a TOML
or JSON mapping whose keys are the long flag names with ``-`` or ``_``),
then from the documented defaults. The reference lives in ``docs/cli.md``.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timedelta
from pathlib import Path

import numpy as np

from . import io
from .domain import CostParams
from .dr import DrOptions, RhoMode, solve_dr
from .errors import SolveFailed
from .harness import EvaluationAborted, PlanConfig, SweepGrid, evaluate, mco_gap, sensitivity_sweep, \
    sweep_csv, sweep_markdown
from .ingest import StationSpec, TripSchema, build_instance_from_trips, load_trips
from .instances import PRESETS, InstanceSpec, generate_instance
from .milp import BackendUnavailable, SolverParams
from .milp.model import Status
from .scenarios import DemandSpec, draw_means, estimate_ambiguity, gen_scenarios, misspecified_set
from .sp import SaaOptions, solve_sp

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SOLVER = 0, 1, 2, 3
SOLVE_LOG_COLUMNS = ("model", "status", "objective", "bound", "gap", "time_seconds", "total_fleet")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# -- option plumbing --------------------------------------------------------

DEFAULTS: dict[str, dict] = {
    "common": {"threads": 1, "time_limit": 3600.0, "mip_gap": 1e-4, "solver": None, "seed": None},
    "gen-instance": {"preset": None, "regions": None, "fleet_bound": 60, "capacity": 5, "headway": 10.0,
                     "fixed_cost": 4000.0, "wait_weight": 2.0, "ride_weight": 1.0, "out": None},
    "ingest": {"trips": None, "stations": None, "stops": None, "trains": 12, "headway": 10.0, "windows": None,
               "first_window": None, "days": None, "max_stops_per_route": 3, "max_routes": None,
               "speed": 12.0, "fleet_bound": 60, "capacity": 5, "fixed_cost": 4000.0, "wait_weight": 2.0,
               "ride_weight": 1.0, "time_col": "dropoff_datetime", "lat_col": "dropoff_latitude",
               "lon_col": "dropoff_longitude", "passengers_col": "passenger_count", "time_format": None,
               "out_dir": None},
    "gen-scenarios": {"instance": None, "spec": None, "mean_range": None, "sigma_ratio": None, "family": None,
                      "rounding": None, "correlation": None, "count": None, "means_seed": None,
                      "misspecified_from": None, "out": None},
    "estimate-ambiguity": {"instance": None, "scenarios": None, "q_lo": 0.20, "q_hi": 0.80, "out": None},
    "solve-sp": {"instance": None, "scenarios": None, "method": "extensive", "subproblem": "milp",
                 "tighten": False, "no_fill_idle": False, "out": None, "log": None, "record_time": False},
    "solve-dr": {"instance": None, "ambiguity": None, "scenarios": None, "q_lo": 0.20, "q_hi": 0.80,
                 "rho_mode": "fixed_zero", "method": "milp", "subproblem": "milp", "no_fill_idle": False,
                 "out": None, "log": None, "record_time": False},
    "evaluate": {"instance": None, "solution": None, "scenarios": None, "mode": "fixed_w",
                 "dynamic_method": "milp", "model_name": "solution", "out": None, "aggregates": None,
                 "summary": None},
    "mco-gap": {"instance": None, "spec": None, "mean_range": None, "sigma_ratio": None, "family": None,
                "rounding": None, "correlation": None, "scenarios_per_replication": 100, "replications": 10,
                "n_eval": 10000, "confidence": 0.95, "method": "extensive", "subproblem": "milp", "out": None,
                "summary": None},
    "sweep": {"instance": None, "spec": None, "mean_range": None, "sigma_ratio": None, "family": None,
              "rounding": None, "correlation": None, "mean_grid": None, "f_grid": None, "beta_grid": None,
              "m_grid": None, "n_scenarios": 100, "n_eval": 1000, "mode": "dynamic_w",
              "dynamic_method": "greedy", "method": "region_dp", "subproblem": "greedy", "experiment": "sweep",
              "out": None, "summary": None},
}
RANDOMIZED = {"gen-instance", "ingest", "gen-scenarios", "mco-gap", "sweep"}
REQUIRED = {
    "gen-instance": ("out",),
    "ingest": ("trips", "stations", "stops", "out_dir"),
    "gen-scenarios": ("instance", "out"),
    "estimate-ambiguity": ("instance", "scenarios", "out"),
    "solve-sp": ("instance", "scenarios", "out"),
    "solve-dr": ("instance", "out"),
    "evaluate": ("instance", "solution", "scenarios", "out"),
    "mco-gap": ("instance", "out"),
    "sweep": ("instance", "out"),
}


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML/JSON file with option values")
    p.add_argument("--threads", type=int, help="concurrency budget for scenario batches (default 1)")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--time-limit", type=float, dest="time_limit", help="solver time limit in seconds")
    p.add_argument("--mip-gap", type=float, dest="mip_gap", help="relative MIP gap target")
    p.add_argument("--solver", help="solver backend (highs or scipy); overrides LMFLEET_SOLVER")


def _add_spec(p):
    p.add_argument("--spec", help="DemandSpec TOML/JSON file")
    p.add_argument("--mean-range", dest="mean_range", type=float, nargs=2, metavar=("A", "B"))
    p.add_argument("--sigma-ratio", dest="sigma_ratio", type=float)
    p.add_argument("--family", choices=("lognormal", "uniform"))
    p.add_argument("--rounding", choices=("nearest_int", "none"))
    p.add_argument("--correlation", type=float)


def build_parser() -> argparse.ArgumentParser:
    root = _Parser(prog="lmfleet", description="Last-mile fleet sizing under uncertain batch demand.")
    sub = root.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-instance", help="synthetic instance with a benchmark layout")
    p.add_argument("--preset", type=int, choices=sorted(PRESETS))
    p.add_argument("--regions", help="per-region TRAINSxSTOPSxROUTES, comma separated, e.g. 12x4x10,12x6x23")
    for flag, t in (("--fleet-bound", int), ("--capacity", int), ("--headway", float), ("--fixed-cost", float),
                    ("--wait-weight", float), ("--ride-weight", float)):
        p.add_argument(flag, type=t)
    p.add_argument("--out")

    p = sub.add_parser("ingest", help="instance and empirical scenarios from trip records")
    p.add_argument("--trips")
    p.add_argument("--stations", help="TOML/JSON file with a 'stations' list (lat, lon, half_width_miles, name)")
    p.add_argument("--stops", help="stops per region, comma separated")
    p.add_argument("--trains", type=int)
    p.add_argument("--headway", type=float)
    p.add_argument("--windows", help="comma separated ISO start times of the service windows")
    p.add_argument("--first-window", dest="first_window", help="ISO start of the first daily window")
    p.add_argument("--days", type=int, help="number of daily windows starting at --first-window")
    p.add_argument("--max-stops-per-route", dest="max_stops_per_route", type=int)
    p.add_argument("--max-routes", dest="max_routes", help="route budget per region, comma separated")
    p.add_argument("--speed", type=float)
    for flag, t in (("--fleet-bound", int), ("--capacity", int), ("--fixed-cost", float),
                    ("--wait-weight", float), ("--ride-weight", float)):
        p.add_argument(flag, type=t)
    for col in ("time", "lat", "lon", "passengers"):
        p.add_argument(f"--{col}-col", dest=f"{col}_col")
    p.add_argument("--time-format", dest="time_format")
    p.add_argument("--out-dir", dest="out_dir")

    p = sub.add_parser("gen-scenarios", help="sample demand scenarios")
    p.add_argument("--instance")
    _add_spec(p)
    p.add_argument("--count", type=int)
    p.add_argument("--means-seed", dest="means_seed", type=int,
                   help="seed for the cell means (default --seed); lets out-of-sample sets share the means")
    p.add_argument("--misspecified-from", dest="misspecified_from",
                   help="ambiguity JSON: draw uniform scenarios with its mean and support instead")
    p.add_argument("--out")

    p = sub.add_parser("estimate-ambiguity", help="mean and quantile support from scenarios")
    p.add_argument("--instance")
    p.add_argument("--scenarios")
    p.add_argument("--q-lo", dest="q_lo", type=float)
    p.add_argument("--q-hi", dest="q_hi", type=float)
    p.add_argument("--out")

    for name, help_ in (("solve-sp", "sample average approximation"), ("solve-dr", "distributionally robust")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--instance")
        p.add_argument("--scenarios")
        if name == "solve-dr":
            p.add_argument("--ambiguity")
            p.add_argument("--q-lo", dest="q_lo", type=float)
            p.add_argument("--q-hi", dest="q_hi", type=float)
            p.add_argument("--rho-mode", dest="rho_mode", choices=("fixed_zero", "free_nonnegative", "free"))
            p.add_argument("--method", choices=("milp", "region_dp"))
        else:
            p.add_argument("--method", choices=("extensive", "region_dp"))
            p.add_argument("--tighten", action="store_const", const=True,
                           help="restrict qualifying multi-stop routes to one trip per train")
        p.add_argument("--subproblem", choices=("milp", "greedy"))
        p.add_argument("--no-fill-idle", dest="no_fill_idle", action="store_const", const=True)
        p.add_argument("--out")
        p.add_argument("--log", help="solve-log CSV (one row)")
        p.add_argument("--record-time", dest="record_time", action="store_const", const=True,
                       help="write wall time into the solve log (makes the file run-dependent)")

    p = sub.add_parser("evaluate", help="out-of-sample evaluation of a solution")
    p.add_argument("--instance")
    p.add_argument("--solution")
    p.add_argument("--scenarios")
    p.add_argument("--mode", choices=("fixed_w", "dynamic_w"))
    p.add_argument("--dynamic-method", dest="dynamic_method", choices=("milp", "greedy"))
    p.add_argument("--model-name", dest="model_name")
    p.add_argument("--out", help="per-scenario CSV")
    p.add_argument("--aggregates", help="mean/median/q75/q95 CSV")
    p.add_argument("--summary", help="Markdown summary")

    p = sub.add_parser("mco-gap", help="statistical optimality gap of the SAA")
    p.add_argument("--instance")
    _add_spec(p)
    p.add_argument("--scenarios-per-replication", dest="scenarios_per_replication", type=int)
    p.add_argument("--replications", type=int)
    p.add_argument("--n-eval", dest="n_eval", type=int)
    p.add_argument("--confidence", type=float)
    p.add_argument("--method", choices=("extensive", "region_dp"))
    p.add_argument("--subproblem", choices=("milp", "greedy"))
    p.add_argument("--out")
    p.add_argument("--summary")

    p = sub.add_parser("sweep", help="sensitivity sweep over demand range, fixed cost, weights and fleet bound")
    p.add_argument("--instance")
    _add_spec(p)
    p.add_argument("--mean-grid", dest="mean_grid", help="e.g. 1:4,3:7")
    p.add_argument("--f-grid", dest="f_grid", help="e.g. 4000,7000,10000")
    p.add_argument("--beta-grid", dest="beta_grid", help="wait:ride pairs, e.g. 2:1,8:4")
    p.add_argument("--m-grid", dest="m_grid", help="fleet bounds, e.g. 40,60")
    p.add_argument("--n-scenarios", dest="n_scenarios", type=int)
    p.add_argument("--n-eval", dest="n_eval", type=int)
    p.add_argument("--mode", choices=("fixed_w", "dynamic_w"))
    p.add_argument("--dynamic-method", dest="dynamic_method", choices=("milp", "greedy"))
    p.add_argument("--method", choices=("region_dp", "extensive"))
    p.add_argument("--subproblem", choices=("milp", "greedy"))
    p.add_argument("--experiment")
    p.add_argument("--out")
    p.add_argument("--summary")

    for p in sub.choices.values():
        _add_common(p)
    return root


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset flags from ``--config`` and then from :data:`DEFAULTS`."""
    cmd = args.command
    known = {**DEFAULTS["common"], **DEFAULTS[cmd]}
    cfg = {}
    if args.config:
        raw = io.load_config(args.config)
        for k, v in raw.items():
            key = k.replace("-", "_")
            if key not in known:
                raise io.DataError(f"{args.config}: unknown option {k!r} for {cmd}")
            cfg[key] = v
    for key, default in known.items():
        if getattr(args, key, None) is None:
            setattr(args, key, cfg.get(key, default))
    missing = [k for k in REQUIRED[cmd] if getattr(args, k) in (None, "")]
    if missing:
        raise UsageError(f"{cmd}: missing required option(s) " + ", ".join("--" + m.replace("_", "-") for m in missing))
    if cmd in RANDOMIZED and args.seed is None and not (cmd == "gen-scenarios" and args.spec):
        raise UsageError(f"{cmd}: an explicit --seed is required")
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return args


def _params(args) -> SolverParams:
    # the solver itself always runs single-threaded so results cannot depend on --threads
    return SolverParams(time_limit_seconds=float(args.time_limit), rel_gap_target=float(args.mip_gap),
                        seed=0, threads=1, backend=args.solver)


def _spec(args) -> DemandSpec:
    base = {}
    if args.spec:
        base = dict(io.load_config(args.spec))
    for key in ("mean_range", "sigma_ratio", "family", "rounding", "correlation"):
        v = getattr(args, key)
        if v is not None:
            base[key] = v
    if args.seed is not None:
        base["seed"] = args.seed
    try:
        return DemandSpec.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise io.DataError(f"invalid demand spec: {exc}") from None


def _pairs(text: str, what: str) -> tuple[tuple[float, float], ...]:
    try:
        out = []
        for item in str(text).split(","):
            a, b = item.split(":")
            out.append((float(a), float(b)))
        return tuple(out)
    except ValueError:
        raise UsageError(f"{what}: expected A:B pairs separated by commas, got {text!r}") from None


def _numbers(text, what: str, cast=float):
    if isinstance(text, (list, tuple)):
        return tuple(cast(x) for x in text)
    try:
        return tuple(cast(x) for x in str(text).split(","))
    except ValueError:
        raise UsageError(f"{what}: expected comma separated numbers, got {text!r}") from None


def _solve_log(path, model: str, res, record_time: bool) -> None:
    out = res.outcome
    bound = out.best_bound
    gap = ""
    if bound is not None and out.objective_value is not None:
        gap = abs(out.objective_value - bound) / max(abs(bound), 1e-9)
    io.write_csv(path, SOLVE_LOG_COLUMNS,
                 [[model, out.status.value, res.objective_value, "" if bound is None else bound, gap,
                   out.wall_time_seconds if record_time else "", res.first_stage.total_fleet]])


# -- subcommands ------------------------------------------------------------

def cmd_gen_instance(args) -> int:
    if (args.preset is None) == (args.regions is None):
        raise UsageError("gen-instance: give exactly one of --preset or --regions")
    if args.preset is not None:
        shape = PRESETS[int(args.preset)]
    else:
        try:
            shape = tuple(tuple(int(x) for x in r.split("x")) for r in str(args.regions).split(","))
        except ValueError:
            raise UsageError(f"--regions: cannot parse {args.regions!r}") from None
        if any(len(r) != 3 for r in shape):
            raise UsageError("--regions: each region needs TRAINSxSTOPSxROUTES")
    spec = InstanceSpec(shape, int(args.fleet_bound), float(args.headway), int(args.capacity),
                        CostParams(float(args.fixed_cost), float(args.wait_weight), float(args.ride_weight)))
    io.save_instance(generate_instance(spec, int(args.seed)), args.out)
    return EXIT_OK


def _windows(args) -> list[datetime]:
    try:
        if args.windows:
            items = args.windows if isinstance(args.windows, list) else str(args.windows).split(",")
            return [datetime.fromisoformat(str(w).strip()) for w in items]
        if args.first_window and args.days:
            first = datetime.fromisoformat(str(args.first_window))
            return [first + timedelta(days=d) for d in range(int(args.days))]
    except ValueError as exc:
        raise UsageError(f"bad window time: {exc}") from None
    raise UsageError("ingest: give --windows or --first-window with --days")


def cmd_ingest(args) -> int:
    st = io.load_config(args.stations)
    try:
        stations = [StationSpec(float(d["lat"]), float(d["lon"]), float(d.get("half_width_miles", 0.5)),
                                str(d.get("name", ""))) for d in st["stations"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise io.DataError(f"{args.stations}: bad station list ({exc})") from None
    stops = _numbers(args.stops, "--stops", int)
    max_routes = None if args.max_routes is None else _numbers(args.max_routes, "--max-routes", int)
    schema = TripSchema(args.time_col, args.lat_col, args.lon_col, args.passengers_col, args.time_format)
    if not Path(args.trips).is_file():
        raise io.DataError(f"file not found: {args.trips}")
    try:
        loaded = load_trips(args.trips, schema)
        res = build_instance_from_trips(
            loaded.trips, stations, stops, _windows(args), int(args.trains), float(args.headway),
            int(args.max_stops_per_route), float(args.speed), max_routes, int(args.fleet_bound),
            int(args.capacity), CostParams(float(args.fixed_cost), float(args.wait_weight), float(args.ride_weight)),
            seed=int(args.seed))
    except (KeyError, ValueError) as exc:
        raise io.DataError(f"ingest failed: {exc}") from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    io.save_instance(res.instance, out / "instance.json")
    io.save_scenarios(res.scenarios, out / "scenarios.csv")
    cols = ("region", "stop", "mu", "sigma", "min", "max", "q20", "q80")
    io.write_csv(out / "stop_stats.csv", cols, [[r[c] for c in cols] for r in res.stats])
    io.write_json(out / "ingest_meta.json", {"schema_version": io.SCHEMA_VERSION, "kind": "ingest_meta",
                                            "seed": int(args.seed), "trips_loaded": len(loaded.trips),
                                            "rows_skipped": loaded.skipped,
                                            "windows": [w.isoformat() for w in _windows(args)]})
    return EXIT_OK


def cmd_gen_scenarios(args) -> int:
    inst = io.load_instance(args.instance)
    if args.count is None or int(args.count) < 1:
        raise UsageError("gen-scenarios: --count must be a positive integer")
    if args.misspecified_from:
        if args.seed is None:
            raise UsageError("gen-scenarios: --misspecified-from needs --seed")
        amb = io.load_ambiguity(args.misspecified_from, inst)
        corr = float(args.correlation or 0.0)
        scen = misspecified_set(amb, int(args.count), int(args.seed), corr, threads=int(args.threads))
    else:
        spec = _spec(args)
        mspec = spec
        if args.means_seed is not None:
            mspec = DemandSpec.from_dict({**spec.to_dict(), "seed": int(args.means_seed)})
        scen = gen_scenarios(inst, draw_means(inst, mspec), spec, int(args.count), threads=int(args.threads))
    io.save_scenarios(scen, args.out)
    return EXIT_OK


def cmd_estimate_ambiguity(args) -> int:
    inst = io.load_instance(args.instance)
    scen = io.load_scenarios(args.scenarios, inst)
    try:
        amb = estimate_ambiguity(scen, float(args.q_lo), float(args.q_hi))
    except ValueError as exc:
        raise io.DataError(str(exc)) from None
    io.write_json(args.out, io.ambiguity_to_dict(amb, {"q_lo": float(args.q_lo), "q_hi": float(args.q_hi),
                                                       "n_scenarios": len(scen), "quantile_method": "linear"}))
    return EXIT_OK


def _solution_meta(model: str, res, extra: dict) -> dict:
    return {"model": model, "status": res.outcome.status.value, "objective_value": res.objective_value,
            "fixed_cost": res.fixed_cost, **extra}


def cmd_solve_sp(args) -> int:
    inst = io.load_instance(args.instance)
    scen = io.load_scenarios(args.scenarios, inst)
    opts = SaaOptions(apply_prop1_tightening=bool(args.tighten), fill_idle_vehicles=not args.no_fill_idle,
                      method=args.method, subproblem=args.subproblem)
    res = solve_sp(inst, scen, opts, _params(args))
    io.write_json(args.out, io.solution_to_dict(res.first_stage, _solution_meta(
        "SP", res, {"method": args.method, "subproblem": args.subproblem, "n_scenarios": len(scen),
                    "tightened": bool(args.tighten)})))
    if args.log:
        _solve_log(args.log, "SP", res, args.record_time)
    return EXIT_OK


def cmd_solve_dr(args) -> int:
    inst = io.load_instance(args.instance)
    if args.ambiguity:
        amb = io.load_ambiguity(args.ambiguity, inst)
    elif args.scenarios:
        try:
            amb = estimate_ambiguity(io.load_scenarios(args.scenarios, inst), float(args.q_lo), float(args.q_hi))
        except ValueError as exc:
            raise io.DataError(str(exc)) from None
    else:
        raise UsageError("solve-dr: give --ambiguity or --scenarios")
    mode = "free_nonnegative" if args.rho_mode == "free" else args.rho_mode
    opts = DrOptions(RhoMode(mode), fill_idle_vehicles=not args.no_fill_idle, method=args.method,
                     subproblem=args.subproblem)
    res = solve_dr(inst, amb, opts, _params(args))
    io.write_json(args.out, io.solution_to_dict(res.first_stage, _solution_meta(
        "DR", res, {"method": args.method, "subproblem": args.subproblem, "rho_mode": mode})))
    if args.log:
        _solve_log(args.log, "DR", res, args.record_time)
    return EXIT_OK


def _write_report(rep, args) -> None:
    Path(args.out).write_text(rep.rows_csv(), encoding="utf-8")
    if args.aggregates:
        Path(args.aggregates).write_text(rep.aggregates_csv(), encoding="utf-8")
    if args.summary:
        Path(args.summary).write_text(rep.summary_markdown(), encoding="utf-8")


def cmd_evaluate(args) -> int:
    inst = io.load_instance(args.instance)
    sol = io.load_solution(args.solution, inst)
    scen = io.load_scenarios(args.scenarios, inst)
    try:
        rep = evaluate(inst, sol, scen, args.mode, dynamic_method=args.dynamic_method, params=_params(args),
                       threads=int(args.threads), meta={"model": args.model_name})
    except EvaluationAborted as exc:
        _write_report(exc.partial, args)
        Path(str(args.out) + ".incomplete").write_text(str(exc) + "\n", encoding="utf-8")
        raise SolveFailed(str(exc)) from None
    _write_report(rep, args)
    return EXIT_OK


def _plan_config(args) -> PlanConfig:
    params = _params(args)
    if args.method == "region_dp":
        return PlanConfig(SaaOptions(method="region_dp", subproblem=args.subproblem),
                          DrOptions(method="region_dp", subproblem=args.subproblem), params)
    return PlanConfig(SaaOptions(), DrOptions(), params)


def cmd_mco_gap(args) -> int:
    inst = io.load_instance(args.instance)
    spec = _spec(args)
    rep = mco_gap(inst, spec, int(args.scenarios_per_replication), int(args.replications), int(args.n_eval),
                  int(args.seed), _plan_config(args), float(args.confidence), int(args.threads))
    doc = {"schema_version": io.SCHEMA_VERSION, "kind": "mco_report", **rep.to_dict(),
           "meta": {"seed": int(args.seed), "spec": spec.to_dict(), "method": args.method,
                    "subproblem": args.subproblem, "scenarios_per_replication": int(args.scenarios_per_replication),
                    "n_eval": int(args.n_eval)}}
    io.write_json(args.out, doc)
    if args.summary:
        Path(args.summary).write_text(rep.summary_markdown(), encoding="utf-8")
    return EXIT_OK


def cmd_sweep(args) -> int:
    inst = io.load_instance(args.instance)
    spec = _spec(args)
    c = inst.costs
    if not np.isscalar(c.fixed_cost_per_vehicle) and args.f_grid is None:
        raise UsageError("sweep: instances with per-region fixed costs need an explicit --f-grid")
    grid = SweepGrid(
        _pairs(args.mean_grid, "--mean-grid") if args.mean_grid else (spec.mean_range,),
        _numbers(args.f_grid, "--f-grid") if args.f_grid else (float(c.fixed_cost_per_vehicle),),
        _pairs(args.beta_grid, "--beta-grid") if args.beta_grid else ((c.wait_weight, c.ride_weight),),
        _numbers(args.m_grid, "--m-grid", int) if args.m_grid else (inst.fleet_bound,),
    )
    rows = sensitivity_sweep(inst, spec, grid, int(args.n_scenarios), int(args.n_eval), int(args.seed),
                             _plan_config(args),
                             args.mode, args.dynamic_method, experiment=str(args.experiment),
                             threads=int(args.threads))
    Path(args.out).write_text(sweep_csv(rows), encoding="utf-8")
    if args.summary:
        Path(args.summary).write_text(sweep_markdown(rows), encoding="utf-8")
    return EXIT_OK


COMMANDS = {
    "gen-instance": cmd_gen_instance,
    "ingest": cmd_ingest,
    "gen-scenarios": cmd_gen_scenarios,
    "estimate-ambiguity": cmd_estimate_ambiguity,
    "solve-sp": cmd_solve_sp,
    "solve-dr": cmd_solve_dr,
    "evaluate": cmd_evaluate,
    "mco-gap": cmd_mco_gap,
    "sweep": cmd_sweep,
}


def _fail(kind: str, code: int, message: str) -> int:
    print(json.dumps({"error": kind, "exit_code": code, "message": " ".join(str(message).split())}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required: " + ", ".join(COMMANDS))
        args = resolve(args)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        return _fail("usage", EXIT_USAGE, exc)
    except (io.DataError, FileNotFoundError, IsADirectoryError) as exc:
        return _fail("data", EXIT_DATA, exc)
    except BackendUnavailable as exc:
        return _fail("solver", EXIT_SOLVER, exc)
    except SolveFailed as exc:
        status = getattr(getattr(exc, "outcome", None), "status", None)
        return _fail("solver", EXIT_SOLVER, f"{exc}" + (f" (status {status.value})" if isinstance(status, Status)
                                                          else ""))
    except ValueError as exc:
        return _fail("data", EXIT_DATA, exc)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
