import io

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lmfleet.milp import (IntegralityError, LinearModel, SolverParams, Status, VarKind, round_integral, solve,
                          write_lp)
from lmfleet.milp.backends import BackendUnavailable, resolve_backend
from lmfleet.milp.lpfile import lp_name
from lmfleet.sp import SaaOptions, build_saa, solve_sp
from lmfleet import DemandScenario, tiny_instance, vehicle_availability

BACKENDS = ["highs", "scipy"]


@pytest.mark.parametrize("backend", BACKENDS)
def test_integer_lower_bound(backend):
    m = LinearModel()
    x = m.add_var("x", VarKind.INTEGER, 0, 10)
    m.add_constraint([x], [1.0], ">=", 2.5)
    m.set_objective("min", [x], [1.0])
    out = solve(m, SolverParams(backend=backend))
    assert out.status is Status.OPTIMAL
    assert out.value("x") == pytest.approx(3.0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_unbounded(backend):
    m = LinearModel()
    x = m.add_var("x")
    m.set_objective("max", [x], [1.0])
    out = solve(m, SolverParams(backend=backend))
    assert out.status is Status.UNBOUNDED
    assert out.values is None


@pytest.mark.parametrize("backend", BACKENDS)
def test_infeasible(backend):
    m = LinearModel()
    x = m.add_var("x", lower=-np.inf)
    m.add_constraint([x], [1.0], "<=", 0.0)
    m.add_constraint([x], [1.0], ">=", 1.0)
    m.set_objective("min", [x], [1.0])
    assert solve(m, SolverParams(backend=backend)).status is Status.INFEASIBLE


def test_rounding_tolerance():
    assert round_integral(np.array([0.9999999]))[0] == 1
    with pytest.raises(IntegralityError):
        round_integral(np.array([0.5]))


def test_bad_bounds_rejected():
    with pytest.raises(ValueError):
        LinearModel().add_var("x", lower=2, upper=1)


def test_unknown_backend(monkeypatch):
    monkeypatch.setenv("LMFLEET_SOLVER", "nonsense")
    with pytest.raises(BackendUnavailable):
        resolve_backend()
    monkeypatch.setenv("LMFLEET_SOLVER", "scipy")
    assert resolve_backend() == "scipy"


def _scenarios(inst, seed, count=2):
    rng = np.random.default_rng(seed)
    return [DemandScenario.from_flat(inst, rng.integers(0, 4, inst.n_cells).astype(float)) for _ in range(count)]


def test_saa_solution_round_trips_through_availability():
    inst = tiny_instance()
    res = solve_sp(inst, _scenarios(inst, 0))
    av = vehicle_availability(inst, res.first_stage.fleet, res.first_stage.trips)
    assert av.witness is None
    assert all(np.array_equal(a, b) for a, b in zip(av.v, res.first_stage.availability))


def test_build_is_deterministic():
    inst = tiny_instance()
    sc = _scenarios(inst, 1, 3)
    a, _ = build_saa(inst, sc, SaaOptions())
    b, _ = build_saa(inst, sc, SaaOptions())
    assert a.names == b.names and a.row_names == b.row_names
    fa, fb = io.StringIO(), io.StringIO()
    write_lp(a, fa)
    write_lp(b, fb)
    assert fa.getvalue() == fb.getvalue()


def test_repeat_solves_identical():
    inst = tiny_instance()
    model, _ = build_saa(inst, _scenarios(inst, 2, 3), SaaOptions())
    x = solve(model).values
    y = solve(model).values
    assert np.array_equal(x, y)


@given(st.integers(0, 10_000))
def test_lp_objective_matches_values(seed):
    rng = np.random.default_rng(seed)
    m = LinearModel()
    n = int(rng.integers(2, 6))
    xs = [m.add_var(f"x{i}", VarKind.CONTINUOUS, 0, float(rng.integers(1, 10))) for i in range(n)]
    for _ in range(int(rng.integers(1, 4))):
        m.add_constraint(xs, rng.uniform(0, 2, n), "<=", float(rng.uniform(1, 10)))
    m.set_objective("max", xs, rng.uniform(-1, 3, n), constant=float(rng.uniform(-5, 5)))
    out = solve(m)
    assert out.status is Status.OPTIMAL
    assert out.objective_value == pytest.approx(m.evaluate_objective(out.values), rel=1e-6, abs=1e-9)


def test_lp_dump_mentions_every_variable():
    inst = tiny_instance()
    model, _ = build_saa(inst, _scenarios(inst, 0, 1), SaaOptions())
    buf = io.StringIO()
    write_lp(model, buf)
    text = buf.getvalue()
    for name in model.names:
        assert lp_name(name) in text
