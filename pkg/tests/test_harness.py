import numpy as np
import pytest

from lmfleet import (CostParams, DemandScenario, DemandSpec, DrOptions, PlanConfig, SolveFailed, SweepGrid,
                     draw_means, evaluate, first_stage_from_trips, gen_scenarios, mco_gap, preset_instance,
                     sensitivity_sweep, solve_recourse_dynamic, solve_recourse_fixed, solve_sp, tiny_instance)
from lmfleet import harness
from lmfleet.harness import EvaluationAborted, quantile, sweep_csv, sweep_markdown, sweep_point
from oracles import random_demand, random_instance, random_schedule


def test_zero_demand_costs_only_the_fleet():
    inst = preset_instance(1, seed=0).with_costs(CostParams(4000.0, 2.0, 1.0))
    fleet = [4, 4, 4, 4]
    fs = first_stage_from_trips(inst, fleet, [np.zeros((r.num_trains, r.num_routes), dtype=int)
                                              for r in inst.regions])
    rep = evaluate(inst, fs, [DemandScenario.zeros(inst)] * 3)
    assert np.all(rep.column("TC") == 64_000)
    assert np.all(rep.column("second_stage") == 0)


def _setup(seed=0, n=6):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, n_regions=2, trains=(3, 4), fleet_bound=3, costs=CostParams(7.0, 2.0, 1.0))
    fs = first_stage_from_trips(inst, [1, 2], random_schedule(rng, inst, [1, 2]))
    sc = [DemandScenario(random_demand(rng, inst)) for _ in range(n)]
    return inst, fs, sc


def test_rows_match_direct_solves():
    inst, fs, sc = _setup()
    fixed = 7.0 * 3
    rep = evaluate(inst, fs, sc)
    assert rep.column("scenario_id").tolist() == list(range(len(sc)))
    for r, s in enumerate(sc):
        assert rep.column("TC")[r] == pytest.approx(fixed + solve_recourse_fixed(inst, fs, s).objective_value,
                                                    rel=1e-9)
    dyn = evaluate(inst, fs, sc, "dynamic_w")
    for r, s in enumerate(sc):
        _, plan = solve_recourse_dynamic(inst, fs.fleet, s)
        assert dyn.column("second_stage")[r] == pytest.approx(plan.objective_value, rel=1e-7, abs=1e-9)
    assert np.all(dyn.column("TC") <= rep.column("TC") + 1e-7)


def test_waiting_and_riding_add_up():
    inst, fs, sc = _setup(1)
    rep = evaluate(inst, fs, sc)
    c = inst.costs
    recomposed = sum(c.wait_weight * rep.column(f"TWT_{s}") + c.ride_weight * rep.column(f"TRT_{s}")
                     for s in range(2))
    assert np.allclose(recomposed, rep.column("second_stage"), rtol=1e-9, atol=1e-7)


def test_aggregates_recompute_from_rows():
    inst, fs, sc = _setup(2, n=9)
    rep = evaluate(inst, fs, sc)
    agg = rep.aggregates()
    tc = np.sort(rep.column("TC"))
    assert agg["TC"]["mean"] == pytest.approx(tc.mean())
    assert agg["TC"]["median"] == pytest.approx(tc[4])
    assert agg["TC"]["q95"] == pytest.approx(np.quantile(tc, 0.95))
    assert quantile(np.array([1.0, 2.0, 3.0, 4.0]), 0.75) == pytest.approx(3.25)


@pytest.mark.parametrize("mode", ["fixed_w", "dynamic_w"])
def test_thread_count_does_not_change_rows(mode):
    inst, fs, sc = _setup(3, n=10)
    a = evaluate(inst, fs, sc, mode)
    b = evaluate(inst, fs, sc, mode, threads=4)
    assert a.rows_csv() == b.rows_csv()


def test_abort_keeps_finished_rows(monkeypatch):
    inst, fs, sc = _setup(4, n=5)
    real = harness.FixedRecourseEvaluator.solve

    def flaky(self, scenario):
        if scenario is sc[3]:
            raise SolveFailed("boom")
        return real(self, scenario)

    monkeypatch.setattr(harness.FixedRecourseEvaluator, "solve", flaky)
    with pytest.raises(EvaluationAborted) as info:
        evaluate(inst, fs, sc)
    part = info.value.partial
    assert not part.complete
    assert part.column("scenario_id").tolist() == [0, 1, 2]


def test_zero_variance_closes_the_gap():
    inst = tiny_instance(costs=CostParams(6.0, 2.0, 1.0))
    spec = DemandSpec(mean_range=(1, 3), sigma_ratio=0.0, seed=5)
    rep = mco_gap(inst, spec, n_scenarios=5, replications=3, n_eval=20, seed=1)
    assert rep.lower_ci[0] == pytest.approx(rep.lower_ci[1])
    assert rep.upper_bound == pytest.approx(rep.lower_bound, rel=1e-9)
    assert rep.gap == pytest.approx(0.0, abs=1e-9)


def test_lower_bound_below_upper_bound():
    inst = tiny_instance(costs=CostParams(6.0, 2.0, 1.0))
    rep = mco_gap(inst, DemandSpec(seed=2), n_scenarios=50, replications=5, n_eval=3000, seed=3)
    assert rep.lower_ci[0] <= rep.upper_ci[1]
    assert not rep.degraded and len(rep.replication_values) == 5
    assert rep.to_dict()["candidate_fleet"] == list(rep.candidate_fleet)


def test_single_point_matches_manual_pipeline():
    template = tiny_instance(n_trains=3)
    spec = DemandSpec(seed=0)
    point = ((1.0, 3.0), 5.0, (2.0, 1.0), 2)
    out = sweep_point(template, spec, point, n_scenarios=4, n_eval=6, seed=9, cfg=PlanConfig(),
                      mode="fixed_w", models=("SP",))
    inst = template.with_costs(CostParams(5.0, 2.0, 1.0)).with_fleet_bound(2)
    s = DemandSpec(mean_range=(1.0, 3.0))
    mu = draw_means(inst, DemandSpec(mean_range=(1.0, 3.0), seed=harness.derive_seed(9, 3)))
    ins = gen_scenarios(inst, mu, DemandSpec(mean_range=s.mean_range, seed=harness.derive_seed(9, 4)), 4)
    manual = solve_sp(inst, ins)
    res, rep = out["SP"]
    assert res.objective_value == pytest.approx(manual.objective_value, rel=1e-9)
    ev = gen_scenarios(inst, mu, DemandSpec(mean_range=s.mean_range, seed=harness.derive_seed(9, 5)), 6)
    assert rep.rows_csv() == evaluate(inst, manual.first_stage, ev, meta={"model": "SP"}).rows_csv()


def test_sweep_rows_and_failures():
    template = tiny_instance(n_trains=3)
    grid = SweepGrid(mean_ranges=((1.0, 3.0),), fixed_costs=(0.0, 50.0), betas=((2.0, 1.0),), fleet_bounds=(2,))
    rows = sensitivity_sweep(template, DemandSpec(), grid, n_scenarios=5, n_eval=5, seed=1, mode="fixed_w")
    fleets = {(r[3], r[7]): r[9] for r in rows if r[8] == "total_fleet"}
    assert fleets[(0.0, "SP")] == 2 and fleets[(0.0, "DR")] == 2
    assert "total fleet" in sweep_markdown(rows)
    assert sweep_csv(rows).splitlines()[0].startswith("experiment,")

    bad = PlanConfig(dr=DrOptions("free_nonnegative"))
    rows = sensitivity_sweep(template, DemandSpec(sigma_ratio=0.8), SweepGrid(fleet_bounds=(2,)), 10, 0,
                             seed=1, cfg=bad)
    status = [r for r in rows if r[8] == "status"]
    assert len(status) == 2 and all(str(r[9]).startswith("failed") for r in status)
