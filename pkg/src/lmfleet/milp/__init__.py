"""Solver-agnostic MILP representation with pluggable backends.

The backend is chosen, in order, from ``SolverParams.backend``,
:func:`set_backend`, the ``LMFLEET_SOLVER`` environment variable, and
finally ``"highs"``.
"""

from .backends import (
    BACKENDS,
    ENV_VAR,
    BackendUnavailable,
    ReusableLp,
    resolve_backend,
    set_backend,
    solve,
)
from .lpfile import write_lp
from .model import (
    INTEGRALITY_TOL,
    IntegralityError,
    LinearModel,
    ModelError,
    Sense,
    SolveOutcome,
    SolverParams,
    Status,
    VarKind,
    VarRef,
    round_integral,
)

__all__ = [
    "BACKENDS",
    "ENV_VAR",
    "INTEGRALITY_TOL",
    "BackendUnavailable",
    "IntegralityError",
    "LinearModel",
    "ModelError",
    "ReusableLp",
    "Sense",
    "SolveOutcome",
    "SolverParams",
    "Status",
    "VarKind",
    "VarRef",
    "resolve_backend",
    "round_integral",
    "set_backend",
    "solve",
    "write_lp",
]
