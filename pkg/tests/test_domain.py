import numpy as np
import pytest
from hypothesis import given, strategies as st

from lmfleet import (CostParams, DemandScenario, Instance, RegionSpec, RouteSpec, SecondStagePlan,
                     first_stage_from_trips, preset_instance, second_stage_cost, tiny_instance, validate_instance,
                     vehicle_availability)
from oracles import random_instance, random_schedule, simulate_availability


def one_route_instance(duration=2, trains=4):
    route = RouteSpec(0, 0, (1,), duration, {0: 5.0})
    return Instance((RegionSpec(0, trains, 1, (route,)),), 3, 10.0, 4, CostParams(0.0, 2.0, 1.0))


def test_preset_one_is_valid():
    inst = preset_instance(1, seed=0)
    assert validate_instance(inst) == []
    assert [r.num_stops for r in inst.regions] == [4, 6, 6, 8]
    assert [r.num_routes for r in inst.regions] == [10, 23, 30, 39]
    assert all(r.num_trains == 12 for r in inst.regions)


def test_unreachable_stop_reported():
    route = RouteSpec(0, 0, (1, 0), 1, {0: 3.0})
    inst = Instance((RegionSpec(0, 2, 2, (route,)),), 2, 10.0, 2)
    codes = [v.code for v in validate_instance(inst)]
    assert "unreachable_stop" in codes


def test_stop_time_beyond_duration_reported():
    route = RouteSpec(0, 0, (1,), 1, {0: 15.0})
    inst = Instance((RegionSpec(0, 2, 1, (route,)),), 2, 10.0, 2)
    msgs = " ".join(v.message for v in validate_instance(inst))
    assert "exceeds" in msgs


def test_idle_fleet_stays_put():
    inst = tiny_instance()
    zeros = [np.zeros((2, 3), dtype=int)]
    av = vehicle_availability(inst, [2], zeros)
    assert av.witness is None
    assert av.v[0].tolist() == [2, 2]


def test_single_trip_returns_after_duration():
    inst = one_route_instance(duration=2, trains=4)
    w = np.zeros((4, 1), dtype=int)
    w[0, 0] = 1
    assert vehicle_availability(inst, [1], [w]).v[0].tolist() == [0, 0, 1, 1]


def test_overdispatch_gives_witness():
    inst = one_route_instance(duration=3, trains=3)
    w = np.array([[1], [1], [0]])
    av = vehicle_availability(inst, [1], [w])
    assert av.witness == (0, 1)
    with pytest.raises(ValueError, match="negative vehicle availability"):
        first_stage_from_trips(inst, [1], [w])


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        vehicle_availability(tiny_instance(), [1], [np.zeros((3, 3))])


@given(st.integers(0, 10_000))
def test_availability_matches_event_simulation(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_regions=2, trains=(2, 6), max_duration=3, fleet_bound=8)
    fleet = [int(rng.integers(0, 5)), int(rng.integers(0, 4))]
    trips = random_schedule(rng, inst, fleet)
    av = vehicle_availability(inst, fleet, trips)
    assert av.witness is None
    for v, ref in zip(av.v, simulate_availability(inst, fleet, trips)):
        assert v.tolist() == ref.tolist()


@given(st.integers(0, 10_000))
def test_vehicle_conservation(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, trains=(3, 6), max_duration=3, fleet_bound=6)
    m = int(rng.integers(0, 6))
    w = random_schedule(rng, inst, [m])[0]
    v = vehicle_availability(inst, [m], [w]).v[0]
    reg = inst.regions[0]
    for i in range(reg.num_trains):
        away = sum(w[ip, k] for k in range(reg.num_routes)
                   for ip in range(max(0, i - reg.durations[k] + 1), i + 1))
        assert v[i] + away == m


def test_zero_plan_costs_nothing():
    inst = tiny_instance()
    plan = SecondStagePlan((np.zeros((2, 2, 3)),), (np.zeros((2, 2)),), 0.0)
    br = second_stage_cost(inst, plan)
    assert br.total == 0.0
    assert br.wait_minutes.tolist() == [0.0] and br.ride_minutes.tolist() == [0.0]


def test_single_backlog_term():
    inst = tiny_instance()
    u = np.zeros((2, 2))
    u[0, 1] = 2
    br = second_stage_cost(inst, SecondStagePlan((np.zeros((2, 2, 3)),), (u,), 0.0))
    assert br.total == 40.0
    assert br.wait_minutes[0] == 20.0


def _random_plan(rng, inst):
    z = tuple(rng.uniform(0, 3, (r.num_trains, r.num_stops, r.num_routes)) * r.incidence[None]
              for r in inst.regions)
    u = tuple(rng.uniform(0, 3, (r.num_trains, r.num_stops)) for r in inst.regions)
    return SecondStagePlan(z, u, 0.0)


@given(st.integers(0, 10_000))
def test_cost_matches_reordered_sum(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_regions=2)
    plan = _random_plan(rng, inst)
    c, h = inst.costs, inst.headway_minutes
    ref = 0.0
    for s in reversed(range(inst.n_regions)):
        reg = inst.regions[s]
        for k in reversed(range(reg.num_routes)):
            for j, t in reg.routes[k].stop_arrival_minutes.items():
                ref += c.ride_weight * t * plan.assignments[s][:, j, k][::-1].sum()
        ref += c.wait_weight * h * plan.backlog[s].T.sum()
    got = second_stage_cost(inst, plan).total
    assert got == pytest.approx(ref, rel=1e-9)


@given(st.integers(0, 10_000), st.floats(0, 50))
def test_cost_is_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng)
    plan = _random_plan(rng, inst)
    scaled = SecondStagePlan(tuple(alpha * z for z in plan.assignments), tuple(alpha * u for u in plan.backlog), 0)
    assert second_stage_cost(inst, scaled).total == pytest.approx(alpha * second_stage_cost(inst, plan).total,
                                                                   rel=1e-9, abs=1e-9)


def test_scenario_flat_round_trip():
    inst = random_instance(np.random.default_rng(3), n_regions=2)
    flat = np.arange(inst.n_cells, dtype=float)
    sc = DemandScenario.from_flat(inst, flat)
    assert np.array_equal(sc.flat(), flat)
    s, i, j = list(inst.cells())[-1]
    assert sc[s, i, j] == flat[-1]


def test_negative_demand_rejected():
    inst = tiny_instance()
    with pytest.raises(ValueError):
        DemandScenario([-np.ones((2, 2))]).check(inst)
