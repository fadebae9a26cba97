"""Estimator-style wrappers around the planning models.

``X`` is a demand matrix of shape ``(n_scenarios, instance.n_cells)`` in
instance cell order (see :meth:`Instance.cells`) or a sequence of
:class:`DemandScenario`. ``fit`` plans a fleet, ``predict`` returns the
per-scenario total cost of the fitted plan, and ``score`` is the negated
mean of that cost, so larger is better as usual.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .domain import DemandScenario, Instance
from .dr import DrOptions, solve_dr
from .harness import evaluate
from .milp import SolverParams
from .scenarios import estimate_ambiguity
from .sp import SaaOptions, solve_sp


def check_demand_matrix(instance: Instance, X) -> list[DemandScenario]:
    if len(X) and isinstance(X[0], DemandScenario):
        out = list(X)
        for sc in out:
            sc.check(instance)
        return out
    a = np.asarray(X, dtype=float)
    if a.ndim != 2 or a.shape[1] != instance.n_cells:
        raise ValueError(f"expected a demand matrix of shape (n, {instance.n_cells}), got {a.shape}")
    if a.shape[0] == 0:
        raise ValueError("no scenarios")
    if not np.all(np.isfinite(a)) or np.any(a < 0):
        raise ValueError("demand must be finite and nonnegative")
    return [DemandScenario.from_flat(instance, row) for row in a]


class AmbiguityEstimator(BaseEstimator):
    """Per-cell mean and ``[q_lo, q_hi]`` quantile support."""

    def __init__(self, q_lo: float = 0.20, q_hi: float = 0.80):
        self.q_lo = q_lo
        self.q_hi = q_hi

    def fit(self, X, y=None, instance: Instance | None = None):
        if instance is not None:
            scen = check_demand_matrix(instance, X)
        else:
            a = np.asarray(X, dtype=float)
            if a.ndim != 2:
                raise ValueError("without an instance X must be a 2-D demand matrix")
            scen = [DemandScenario((row[None, :],)) for row in a]
        self.ambiguity_ = estimate_ambiguity(scen, self.q_lo, self.q_hi)
        self.mean_ = np.concatenate([m.ravel() for m in self.ambiguity_.mean])
        self.lower_ = np.concatenate([m.ravel() for m in self.ambiguity_.lower])
        self.upper_ = np.concatenate([m.ravel() for m in self.ambiguity_.upper])
        return self


class _Planner(BaseEstimator):
    def _params(self) -> SolverParams:
        return SolverParams(time_limit_seconds=self.time_limit, rel_gap_target=self.mip_gap)

    def _store(self, res):
        self.result_ = res
        self.first_stage_ = res.first_stage
        self.fleet_ = np.asarray(res.first_stage.fleet)
        self.objective_ = res.objective_value
        return self

    def predict(self, X, mode: str = "fixed_w") -> np.ndarray:
        """Total cost per scenario (fixed cost plus recourse) of the fitted plan.

        ``mode="dynamic_w"`` re-plans trips per scenario with the greedy evaluator.
        """
        if not hasattr(self, "first_stage_"):
            raise AttributeError("call fit first")
        scen = check_demand_matrix(self.instance, X)
        rep = evaluate(self.instance, self.first_stage_, scen, mode, dynamic_method="greedy",
                       params=self._params())
        return rep.column("TC")

    def score(self, X, y=None) -> float:
        return -float(self.predict(X).mean())


class SaaFleetPlanner(_Planner):
    """Sample average approximation fitted on demand scenarios."""

    def __init__(self, instance: Instance, tighten: bool = False, method: str = "extensive",
                 subproblem: str = "milp", fill_idle: bool = True, time_limit: float = 3600.0,
                 mip_gap: float = 1e-4):
        self.instance = instance
        self.tighten = tighten
        self.method = method
        self.subproblem = subproblem
        self.fill_idle = fill_idle
        self.time_limit = time_limit
        self.mip_gap = mip_gap

    def fit(self, X, y=None, sample_weight=None):
        scen = check_demand_matrix(self.instance, X)
        w = None if sample_weight is None else tuple(np.asarray(sample_weight, float) / np.sum(sample_weight))
        opts = SaaOptions(self.tighten, w, self.fill_idle, self.method, self.subproblem)
        return self._store(solve_sp(self.instance, scen, opts, self._params()))


class DrFleetPlanner(_Planner):
    """Distributionally robust plan over the mean/support set estimated from ``X``."""

    def __init__(self, instance: Instance, q_lo: float = 0.20, q_hi: float = 0.80, rho_mode: str = "fixed_zero",
                 method: str = "milp", subproblem: str = "milp", fill_idle: bool = True,
                 time_limit: float = 3600.0, mip_gap: float = 1e-4):
        self.instance = instance
        self.q_lo = q_lo
        self.q_hi = q_hi
        self.rho_mode = rho_mode
        self.method = method
        self.subproblem = subproblem
        self.fill_idle = fill_idle
        self.time_limit = time_limit
        self.mip_gap = mip_gap

    def fit(self, X, y=None):
        scen = check_demand_matrix(self.instance, X)
        self.ambiguity_ = estimate_ambiguity(scen, self.q_lo, self.q_hi)
        opts = DrOptions(self.rho_mode, self.fill_idle, self.method, self.subproblem)
        return self._store(solve_dr(self.instance, self.ambiguity_, opts, self._params()))
