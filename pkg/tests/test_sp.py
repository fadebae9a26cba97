from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lmfleet import (CostParams, DemandScenario, FixedRecourseEvaluator, Instance, RegionSpec, RouteSpec, SaaOptions,
                     preset_instance, solve_sp, tiny_instance)
from lmfleet.milp import SolverParams, VarKind
from lmfleet.sp import build_saa, expected_counts
from oracles import brute_force, random_demand, random_instance


def scen(inst, rng, count, high=4):
    return [DemandScenario(random_demand(rng, inst, high)) for _ in range(count)]


def test_zero_demand_buys_nothing():
    inst = tiny_instance(costs=CostParams(5.0, 2.0, 1.0))
    res = solve_sp(inst, [DemandScenario.zeros(inst)] * 2)
    assert res.first_stage.fleet == (0,)
    assert not res.first_stage.trips[0].any()
    assert res.objective_value == 0


def test_single_scenario_is_deterministic_problem():
    rng = np.random.default_rng(0)
    inst = tiny_instance(costs=CostParams(3.0, 2.0, 1.0))
    sc = scen(inst, rng, 1)
    res = solve_sp(inst, sc)
    q = FixedRecourseEvaluator(inst, res.first_stage).solve(sc[0]).objective_value
    assert res.objective_value == pytest.approx(3.0 * res.first_stage.total_fleet + q, rel=1e-9)
    assert res.objective_value == pytest.approx(brute_force(inst, [s.demand for s in sc]), rel=1e-9)


def test_counts_match_closed_form():
    inst = preset_instance(1, seed=0)
    rng = np.random.default_rng(1)
    R = 100
    sc = [DemandScenario.from_flat(inst, rng.uniform(0, 4, inst.n_cells)) for _ in range(R)]
    model, _ = build_saa(inst, sc, SaaOptions(apply_prop1_tightening=True))
    kinds = Counter(n.split("[")[0] for n in model.names)
    regs = inst.regions
    assert kinds["m"] == 4
    assert kinds["w"] == sum(r.num_trains * r.num_routes for r in regs)
    assert kinds["v"] == sum(r.num_trains for r in regs)
    assert kinds["u"] == R * sum(r.num_trains * r.num_stops for r in regs)
    served = [sum(sum(k.serves) for k in r.routes) for r in regs]
    assert kinds["z"] == R * sum(r.num_trains * p for r, p in zip(regs, served))
    n_bin = sum(1 for v in model.variables if v.kind is VarKind.BINARY)
    assert n_bin == sum(r.num_trains * int(r.single_trip_routes.sum()) for r in regs)
    exp = expected_counts(inst, R, tighten=True)
    assert model.n_vars == exp["variables"] and model.n_constraints == exp["constraints"]


@pytest.mark.parametrize("seed", range(3))
def test_tiny_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    for f in (0.0, 8.0, 40.0):
        inst = tiny_instance(costs=CostParams(f, 2.0, 1.0))
        sc = scen(inst, rng, 3)
        assert solve_sp(inst, sc).objective_value == pytest.approx(brute_force(inst, [s.demand for s in sc]),
                                                                   rel=1e-6, abs=1e-9)


def test_zero_fixed_cost_uses_whole_fleet():
    rng = np.random.default_rng(4)
    inst = random_instance(rng, n_regions=2, fleet_bound=5, costs=CostParams(0.0, 2.0, 1.0))
    res = solve_sp(inst, scen(inst, rng, 3))
    assert res.first_stage.total_fleet == 5


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 7.0]))
def test_cost_scaling(seed, lam):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, fleet_bound=3)
    sc = scen(inst, rng, 2)
    base = solve_sp(inst, sc)
    scaled_inst = inst.with_costs(inst.costs.scaled(lam))
    scaled = solve_sp(scaled_inst, sc)
    assert scaled.objective_value == pytest.approx(lam * base.objective_value, rel=1e-6, abs=1e-9)
    # the unscaled optimum stays optimal after scaling
    fixed = float(scaled_inst.fixed_costs @ np.asarray(base.first_stage.fleet))
    ev = FixedRecourseEvaluator(scaled_inst, base.first_stage)
    again = fixed + np.mean([ev.solve(s).objective_value for s in sc])
    assert again == pytest.approx(scaled.objective_value, rel=1e-6, abs=1e-9)


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_value_non_increasing_in_fleet_bound(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_regions=2, fleet_bound=1)
    sc = scen(inst, rng, 2)
    vals = [solve_sp(inst.with_fleet_bound(M), sc).objective_value for M in (1, 2, 3, 4)]
    assert all(b <= a + 1e-7 for a, b in zip(vals, vals[1:]))


@settings(max_examples=8)
@given(st.integers(0, 10_000))
def test_duplicated_scenario_changes_nothing(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, fleet_bound=3)
    a, b = scen(inst, rng, 2)
    plain = solve_sp(inst, [a, b]).objective_value
    dup = solve_sp(inst, [a, a, b], SaaOptions(scenario_weights=(0.25, 0.25, 0.5))).objective_value
    assert dup == pytest.approx(plain, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("seed", range(4))
def test_region_tables_match_extensive_form(seed):
    rng = np.random.default_rng(100 + seed)
    inst = random_instance(rng, n_regions=2, trains=(3, 4), fleet_bound=4,
                           costs=CostParams((6.0, 15.0), 2.0, 1.0))
    sc = scen(inst, rng, 3)
    ext = solve_sp(inst, sc)
    dp = solve_sp(inst, sc, SaaOptions(method="region_dp"))
    assert dp.outcome.status.value == "optimal"
    assert dp.objective_value == pytest.approx(ext.objective_value, rel=1e-6, abs=1e-9)


def test_greedy_tables_give_feasible_upper_bound():
    rng = np.random.default_rng(7)
    inst = random_instance(rng, n_regions=2, trains=(4, 5), fleet_bound=4)
    sc = scen(inst, rng, 3)
    ext = solve_sp(inst, sc)
    fast = solve_sp(inst, sc, SaaOptions(method="region_dp", subproblem="greedy"))
    assert fast.outcome.status.value == "feasible"
    assert fast.objective_value >= ext.objective_value - 1e-7


def test_single_trip_routes_need_dominating_subroutes():
    inst = tiny_instance()
    assert inst.regions[0].single_trip_routes.tolist() == [False, False, True]
    slow = RouteSpec(1, 0, (0, 1), 1, {1: 10.0})  # reaches stop 1 later than the pair route
    reg = inst.regions[0]
    other = RegionSpec(0, 2, 2, (reg.routes[0], slow, reg.routes[2]))
    assert not other.single_trip_routes.any()


def test_repeated_pair_trip_can_hedge_between_scenarios():
    # two trips on the two-stop route serve whichever stop is busy; the binary cut loses that
    inst = tiny_instance(costs=CostParams(40.0, 2.0, 1.0))
    sc = [DemandScenario([np.array(d, dtype=float)]) for d in
          ([[3, 2], [0, 2]], [[0, 0], [0, 1]], [[4, 0], [3, 0]])]
    exact = solve_sp(inst, sc)
    cut = solve_sp(inst, sc, SaaOptions(apply_prop1_tightening=True))
    assert exact.objective_value == pytest.approx(brute_force(inst, [s.demand for s in sc]), rel=1e-9)
    assert exact.first_stage.trips[0][1, 2] == 2
    assert cut.objective_value > exact.objective_value + 1


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_tightening_is_exact_for_one_scenario(seed):
    rng = np.random.default_rng(seed)
    inst = preset_instance(1, seed=seed % 7)
    small = Instance(tuple(RegionSpec(r.region_id, 3, r.num_stops, r.routes) for r in inst.regions[:2]), 3,
                     inst.headway_minutes, 2, CostParams(5.0, 2.0, 1.0))
    sc = [DemandScenario(random_demand(rng, small, high=4))]
    exact = SolverParams(rel_gap_target=1e-9)
    a = solve_sp(small, sc, SaaOptions(), exact).objective_value
    b = solve_sp(small, sc, SaaOptions(apply_prop1_tightening=True), exact).objective_value
    assert b == pytest.approx(a, rel=1e-7)


def test_bad_weights_rejected():
    inst = tiny_instance()
    with pytest.raises(ValueError):
        solve_sp(inst, [DemandScenario.zeros(inst)] * 2, SaaOptions(scenario_weights=(0.7, 0.7)))
    with pytest.raises(ValueError):
        solve_sp(inst, [])
