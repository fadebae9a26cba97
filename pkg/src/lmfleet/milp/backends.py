"""Solver backends. ``highs`` drives HiGHS through ``highspy``; ``scipy`` goes
through :func:`scipy.optimize.milp` (also HiGHS, fewer controls)."""

from __future__ import annotations

import logging
import math
import os
import time

import numpy as np

from .model import LinearModel, ModelError, SolveOutcome, SolverParams, Status

log = logging.getLogger(__name__)

ENV_VAR = "LMFLEET_SOLVER"
BACKENDS = ("highs", "scipy")
_default_backend: str | None = None


class BackendUnavailable(RuntimeError):
    pass


def set_backend(name: str | None) -> None:
    if name is not None and name not in BACKENDS:
        raise ValueError(f"unknown backend {name!r}; choose from {BACKENDS}")
    global _default_backend
    _default_backend = name


def resolve_backend(requested: str | None = None) -> str:
    name = requested or _default_backend or os.environ.get(ENV_VAR) or "highs"
    if name not in BACKENDS:
        raise BackendUnavailable(f"unknown backend {name!r}; choose from {BACKENDS}")
    if name == "highs":
        try:
            import highspy  # noqa: F401
        except ImportError as exc:
            raise BackendUnavailable("backend 'highs' needs the highspy package") from exc
    return name


def solve(model: LinearModel, params: SolverParams = SolverParams()) -> SolveOutcome:
    """Solve ``model``; never raises on solver status, only on malformed input or a missing backend."""
    model.check()
    backend = resolve_backend(params.backend)
    start = time.perf_counter()
    if model.n_vars == 0:
        return SolveOutcome(Status.OPTIMAL, model.objective_constant, model.objective_constant,
                            np.zeros(0), 0.0, "empty model", backend, ())
    run = _solve_highs if backend == "highs" else _solve_scipy
    status, obj, bound, x, msg = run(model, params)
    if status == "unbounded_or_infeasible":
        status = _disambiguate(model, params, run)
        obj = bound = x = None
    elapsed = time.perf_counter() - start
    if status.has_values and x is not None:
        obj = model.evaluate_objective(x) if obj is None else obj
    else:
        x = None
        obj = None if status is not Status.UNBOUNDED else (-math.inf if model.objective_sense == "min" else math.inf)
    return SolveOutcome(status, obj, bound, x, elapsed, msg, backend, model.names)


def _disambiguate(model, params, run) -> Status:
    """Decide infeasible vs unbounded by solving the feasibility problem (zero objective)."""
    probe = _zero_objective_copy(model)
    status, *_ = run(probe, params)
    if isinstance(status, Status) and status.has_values:
        return Status.UNBOUNDED
    if status == Status.INFEASIBLE:
        return Status.INFEASIBLE
    return Status.ERROR


def _zero_objective_copy(model: LinearModel) -> LinearModel:
    import copy

    probe = copy.copy(model)
    probe._obj = np.zeros(model.n_vars)
    probe.objective_constant = 0.0
    return probe


def _solve_highs(model: LinearModel, params: SolverParams):
    import highspy

    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("random_seed", int(params.seed))
    h.setOptionValue("threads", int(params.threads))
    h.setOptionValue("time_limit", float(params.time_limit_seconds))
    h.setOptionValue("mip_rel_gap", float(params.rel_gap_target))
    load_into_highs(h, model)
    h.run()
    return _read_highs(h, model)


def load_into_highs(h, model: LinearModel) -> None:
    import highspy

    a = model.matrix().tocsc()
    lb, ub = model.column_bounds()
    rlo, rhi = model.row_bounds()
    inf = highspy.kHighsInf
    lp = highspy.HighsLp()
    lp.num_col_ = model.n_vars
    lp.num_row_ = model.n_constraints
    sign = 1.0 if model.objective_sense == "min" else -1.0
    lp.col_cost_ = sign * model.objective
    lp.offset_ = sign * model.objective_constant
    lp.col_lower_ = np.where(np.isinf(lb), -inf, lb)
    lp.col_upper_ = np.where(np.isinf(ub), inf, ub)
    lp.row_lower_ = np.where(np.isinf(rlo), -inf, rlo)
    lp.row_upper_ = np.where(np.isinf(rhi), inf, rhi)
    lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
    lp.a_matrix_.start_ = a.indptr.astype(np.int32)
    lp.a_matrix_.index_ = a.indices.astype(np.int32)
    lp.a_matrix_.value_ = a.data
    if model.is_mip:
        lp.integrality_ = [
            highspy.HighsVarType.kInteger if f else highspy.HighsVarType.kContinuous
            for f in model.integrality()
        ]
    st = h.passModel(lp)
    if st == highspy.HighsStatus.kError:
        raise ModelError("HiGHS rejected the model")


def _read_highs(h, model: LinearModel):
    import highspy

    ms = h.getModelStatus()
    info = h.getInfo()
    MS = highspy.HighsModelStatus
    sign = 1.0 if model.objective_sense == "min" else -1.0
    has_sol = info.primal_solution_status == 2  # kSolutionStatusFeasible
    x = np.array(h.getSolution().col_value) if has_sol else None
    obj = sign * info.objective_function_value if has_sol else None
    if model.is_mip:
        bound = sign * info.mip_dual_bound if math.isfinite(info.mip_dual_bound) else None
    else:
        bound = obj
    msg = h.modelStatusToString(ms)
    if ms == MS.kOptimal:
        status = Status.OPTIMAL
        if bound is None:
            bound = obj
    elif ms == MS.kInfeasible:
        status = Status.INFEASIBLE
    elif ms == MS.kUnbounded:
        status = Status.UNBOUNDED
    elif ms == MS.kUnboundedOrInfeasible:
        status = "unbounded_or_infeasible"
    elif ms in (MS.kTimeLimit, MS.kIterationLimit, MS.kSolutionLimit, MS.kInterrupt):
        status = Status.FEASIBLE_TIME_LIMIT if has_sol else Status.ERROR
    else:
        status = Status.ERROR
    return status, obj, bound, x, msg


def _solve_scipy(model: LinearModel, params: SolverParams):
    from scipy.optimize import Bounds, LinearConstraint, milp

    a = model.matrix()
    lb, ub = model.column_bounds()
    rlo, rhi = model.row_bounds()
    sign = 1.0 if model.objective_sense == "min" else -1.0
    cons = [LinearConstraint(a, rlo, rhi)] if model.n_constraints else []
    res = milp(
        sign * model.objective,
        integrality=model.integrality(),
        bounds=Bounds(lb, ub),
        constraints=cons,
        options={"time_limit": float(params.time_limit_seconds),
                 "mip_rel_gap": float(params.rel_gap_target), "disp": False},
    )
    x = res.x if res.x is not None else None
    obj = None if x is None else float(model.objective @ x + model.objective_constant)
    bound = getattr(res, "mip_dual_bound", None)
    if bound is not None and math.isfinite(bound):
        bound = sign * bound + model.objective_constant
    else:
        bound = obj if res.status == 0 else None
    if res.status == 0:
        status = Status.OPTIMAL
    elif res.status == 1:
        status = Status.FEASIBLE_TIME_LIMIT if x is not None else Status.ERROR
    elif res.status == 2:
        status = Status.INFEASIBLE
    elif res.status == 3:
        status = Status.UNBOUNDED
    elif "unbounded" in str(res.message).lower():
        status = "unbounded_or_infeasible"
    else:
        status = Status.ERROR
    return status, obj, bound, x, str(res.message)


class ReusableLp:
    """One loaded model re-solved under changing row bounds.

    Every :meth:`solve` starts from a cleared solver state, so results do not
    depend on the order in which right-hand sides are visited.
    """

    def __init__(self, model: LinearModel, params: SolverParams = SolverParams()):
        self.model = model
        self.params = params
        self.backend = resolve_backend(params.backend)
        self._lo, self._hi = model.row_bounds()
        self._lo = self._lo.copy()
        self._hi = self._hi.copy()
        if self.backend == "highs":
            import highspy

            self._h = highspy.Highs()
            h = self._h
            h.setOptionValue("output_flag", False)
            h.setOptionValue("random_seed", int(params.seed))
            h.setOptionValue("threads", int(params.threads))
            h.setOptionValue("time_limit", float(params.time_limit_seconds))
            h.setOptionValue("mip_rel_gap", float(params.rel_gap_target))
            load_into_highs(h, model)

    def set_row_bounds(self, rows: np.ndarray, lower: np.ndarray, upper: np.ndarray) -> None:
        rows = np.asarray(rows, dtype=np.int64)
        self._lo[rows] = lower
        self._hi[rows] = upper
        if self.backend == "highs":
            import highspy

            inf = highspy.kHighsInf
            lo = np.where(np.isinf(lower), -inf, lower).astype(float)
            hi = np.where(np.isinf(upper), inf, upper).astype(float)
            self._h.changeRowsBounds(len(rows), rows.astype(np.int32), lo, hi)

    def solve(self) -> SolveOutcome:
        start = time.perf_counter()
        if self.backend == "highs":
            self._h.clearSolver()
            self._h.run()
            status, obj, bound, x, msg = _read_highs(self._h, self.model)
        else:
            m = _with_row_bounds(self.model, self._lo, self._hi)
            status, obj, bound, x, msg = _solve_scipy(m, self.params)
        if status == "unbounded_or_infeasible":
            status, obj, bound, x = Status.ERROR, None, None, None
        if not (isinstance(status, Status) and status.has_values):
            x = None
        return SolveOutcome(status, obj, bound, x, time.perf_counter() - start, msg, self.backend,
                            self.model.names)


def _with_row_bounds(model: LinearModel, lo: np.ndarray, hi: np.ndarray) -> LinearModel:
    import copy

    from .model import Sense

    m = copy.copy(model)
    senses, rhs = [], []
    for l, u in zip(lo, hi):
        if l == u:
            sense, value = Sense.EQ, l
        elif np.isinf(l):
            sense, value = Sense.LE, u
        elif np.isinf(u):
            sense, value = Sense.GE, l
        else:
            raise ModelError("ranged rows are not representable")
        senses.append(sense)
        rhs.append(float(value))
    m._senses, m._rhs = senses, rhs
    return m
