from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import sparse

INTEGRALITY_TOL = 1e-6


class VarKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    INTEGER = "integer"
    BINARY = "binary"


class Sense(str, enum.Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE_TIME_LIMIT = "feasible_time_limit"
    FEASIBLE = "feasible"  # heuristic solution, no optimality claim
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    ERROR = "error"

    @property
    def has_values(self) -> bool:
        return self in (Status.OPTIMAL, Status.FEASIBLE_TIME_LIMIT, Status.FEASIBLE)


@dataclass(frozen=True)
class VarRef:
    id: int
    kind: VarKind
    lower: float
    upper: float
    name: str


class ModelError(ValueError):
    """The model is malformed (bad bounds, unknown variable, non-finite coefficient)."""


class IntegralityError(ValueError):
    pass


class LinearModel:
    """Sparse MILP assembled row by row.

    Variables are stored column-wise in insertion order, constraints in
    insertion order; both orders are part of the model's identity, so the
    same build inputs always give the same model.
    """

    def __init__(self, name: str = "model"):
        self.name = name
        self._names: list[str] = []
        self._kinds: list[VarKind] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._row_idx: list[np.ndarray] = []
        self._row_val: list[np.ndarray] = []
        self._senses: list[Sense] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self.objective_sense = "min"
        self._obj = np.zeros(0)
        self.objective_constant = 0.0
        self._name_to_id: dict[str, int] | None = None

    # -- variables -------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self._names)

    @property
    def n_constraints(self) -> int:
        return len(self._senses)

    def add_var(self, name: str, kind: VarKind = VarKind.CONTINUOUS,
                lower: float = 0.0, upper: float = math.inf) -> int:
        kind = VarKind(kind)
        if kind is VarKind.BINARY:
            lower, upper = max(0.0, lower), min(1.0, upper)
        if math.isnan(lower) or math.isnan(upper) or lower > upper:
            raise ModelError(f"variable {name}: invalid bounds [{lower}, {upper}]")
        self._names.append(name)
        self._kinds.append(kind)
        self._lb.append(float(lower))
        self._ub.append(float(upper))
        self._name_to_id = None
        return len(self._names) - 1

    def var(self, name: str) -> VarRef:
        if self._name_to_id is None:
            self._name_to_id = {n: i for i, n in enumerate(self._names)}
        try:
            return self.variable(self._name_to_id[name])
        except KeyError:
            raise KeyError(f"no variable named {name!r}") from None

    def variable(self, idx: int) -> VarRef:
        return VarRef(idx, self._kinds[idx], self._lb[idx], self._ub[idx], self._names[idx])

    @property
    def variables(self) -> tuple[VarRef, ...]:
        return tuple(self.variable(i) for i in range(self.n_vars))

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self._names)

    def set_bounds(self, idx: int, lower: float, upper: float) -> None:
        if lower > upper:
            raise ModelError(f"variable {self._names[idx]}: invalid bounds [{lower}, {upper}]")
        self._lb[idx], self._ub[idx] = float(lower), float(upper)

    def relax(self) -> None:
        """Drop integrality in place (binary bounds stay [0, 1])."""
        self._kinds = [VarKind.CONTINUOUS] * self.n_vars

    @property
    def is_mip(self) -> bool:
        return any(k is not VarKind.CONTINUOUS for k in self._kinds)

    # -- constraints -----------------------------------------------------
    def add_constraint(self, idx: Sequence[int], coefs: Sequence[float], sense: Sense | str,
                       rhs: float, name: str | None = None) -> int:
        idx = np.asarray(idx, dtype=np.int64)
        coefs = np.asarray(coefs, dtype=float)
        if idx.shape != coefs.shape or idx.ndim != 1:
            raise ModelError("constraint index/coefficient arrays must be 1-D and equal length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.n_vars):
            raise ModelError("constraint references an undeclared variable")
        if not np.all(np.isfinite(coefs)) or not math.isfinite(rhs):
            raise ModelError("constraint coefficients and rhs must be finite")
        self._row_idx.append(idx)
        self._row_val.append(coefs)
        self._senses.append(Sense(sense))
        self._rhs.append(float(rhs))
        self._row_names.append(name or f"c{len(self._senses) - 1}")
        return len(self._senses) - 1

    def constraint(self, row: int) -> tuple[dict[int, float], Sense, float]:
        expr: dict[int, float] = {}
        for i, c in zip(self._row_idx[row].tolist(), self._row_val[row].tolist()):
            expr[i] = expr.get(i, 0.0) + c
        return expr, self._senses[row], self._rhs[row]

    @property
    def constraints(self) -> list[tuple[dict[int, float], Sense, float]]:
        return [self.constraint(r) for r in range(self.n_constraints)]

    @property
    def row_names(self) -> tuple[str, ...]:
        return tuple(self._row_names)

    def set_rhs(self, row: int, rhs: float) -> None:
        self._rhs[row] = float(rhs)

    # -- objective -------------------------------------------------------
    def set_objective(self, sense: str, idx: Sequence[int], coefs: Sequence[float],
                      constant: float = 0.0) -> None:
        if sense not in ("min", "max"):
            raise ModelError("objective sense must be 'min' or 'max'")
        c = np.zeros(self.n_vars)
        idx = np.asarray(idx, dtype=np.int64)
        coefs = np.asarray(coefs, dtype=float)
        if not np.all(np.isfinite(coefs)):
            raise ModelError("objective coefficients must be finite")
        np.add.at(c, idx, coefs)
        self.objective_sense = sense
        self._obj = c
        self.objective_constant = float(constant)

    @property
    def objective(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        c[: self._obj.size] = self._obj
        return c

    def evaluate_objective(self, values: np.ndarray) -> float:
        return float(self.objective @ np.asarray(values, dtype=float) + self.objective_constant)

    # -- export ----------------------------------------------------------
    def matrix(self) -> sparse.csr_matrix:
        n_rows = self.n_constraints
        if n_rows == 0:
            return sparse.csr_matrix((0, self.n_vars))
        lens = np.fromiter((a.size for a in self._row_idx), dtype=np.int64, count=n_rows)
        indptr = np.concatenate([[0], np.cumsum(lens)])
        indices = np.concatenate(self._row_idx) if indptr[-1] else np.zeros(0, dtype=np.int64)
        data = np.concatenate(self._row_val) if indptr[-1] else np.zeros(0)
        a = sparse.csr_matrix((data, indices, indptr), shape=(n_rows, self.n_vars))
        a.sum_duplicates()
        return a

    def row_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        rhs = np.asarray(self._rhs)
        senses = np.array([s.value for s in self._senses])
        lo = np.where(senses == "<=", -np.inf, rhs)
        hi = np.where(senses == ">=", np.inf, rhs)
        return lo, hi

    def column_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        return np.asarray(self._lb, dtype=float), np.asarray(self._ub, dtype=float)

    def integrality(self) -> np.ndarray:
        return np.array([k is not VarKind.CONTINUOUS for k in self._kinds], dtype=np.int64)

    def check(self) -> None:
        lb, ub = self.column_bounds()
        if np.any(lb > ub):
            raise ModelError("a variable has lower > upper")
        if self._obj.size > self.n_vars:
            raise ModelError("objective references undeclared variables")


@dataclass(frozen=True)
class SolverParams:
    time_limit_seconds: float = 3600.0
    rel_gap_target: float = 1e-4
    seed: int = 0
    threads: int = 1
    backend: str | None = None


@dataclass(frozen=True, eq=False)
class SolveOutcome:
    status: Status
    objective_value: float | None
    best_bound: float | None
    values: np.ndarray | None
    wall_time_seconds: float
    message: str = ""
    backend: str = ""
    names: tuple[str, ...] = field(default=(), repr=False)

    def value(self, var: VarRef | int | str) -> float:
        if self.values is None:
            raise ValueError(f"no values available (status {self.status.value})")
        if isinstance(var, str):
            var = self.names.index(var)
        idx = var.id if isinstance(var, VarRef) else int(var)
        return float(self.values[idx])

    @property
    def mip_gap(self) -> float | None:
        if self.objective_value is None or self.best_bound is None:
            return None
        return (self.objective_value - self.best_bound) / max(abs(self.best_bound), 1e-9)


def round_integral(values: np.ndarray, tol: float = INTEGRALITY_TOL, what: str = "variable") -> np.ndarray:
    """Round integer-kind values, raising if any lies farther than ``tol`` from an integer."""
    values = np.asarray(values, dtype=float)
    r = np.rint(values)
    bad = np.abs(values - r) > tol
    if np.any(bad):
        pos = np.argwhere(bad)[0]
        raise IntegralityError(
            f"{what}{list(pos)} = {values[tuple(pos)]!r} is not within {tol} of an integer"
        )
    return r.astype(np.int64)
