import numpy as np
import pytest
from sklearn.base import clone

from lmfleet import (AmbiguityEstimator, CostParams, DemandScenario, DemandSpec, DrFleetPlanner, SaaFleetPlanner,
                     check_demand_matrix, draw_means, estimate_ambiguity, evaluate, solve_dr, solve_sp,
                     tiny_instance)
from lmfleet.scenarios import scenario_matrix


@pytest.fixture(scope="module")
def data():
    inst = tiny_instance(costs=CostParams(6.0, 2.0, 1.0))
    spec = DemandSpec(seed=4)
    X = scenario_matrix(inst, draw_means(inst, spec), spec, 12)
    return inst, X


def test_matrix_round_trip(data):
    inst, X = data
    scen = check_demand_matrix(inst, X)
    assert np.array_equal(np.stack([s.flat() for s in scen]), X)
    assert check_demand_matrix(inst, scen) == scen
    with pytest.raises(ValueError):
        check_demand_matrix(inst, X[:, :3])
    with pytest.raises(ValueError):
        check_demand_matrix(inst, -X)


def test_saa_planner_matches_solver(data):
    inst, X = data
    est = SaaFleetPlanner(inst).fit(X)
    res = solve_sp(inst, check_demand_matrix(inst, X))
    assert est.objective_ == pytest.approx(res.objective_value, rel=1e-9)
    assert tuple(est.fleet_) == res.first_stage.fleet
    tc = est.predict(X)
    assert tc.mean() == pytest.approx(res.objective_value, rel=1e-7)
    assert est.score(X) == pytest.approx(-tc.mean())


def test_sample_weights_match_duplication(data):
    inst, X = data
    dup = SaaFleetPlanner(inst).fit(np.vstack([X[:2], X[:1]]))
    w = SaaFleetPlanner(inst).fit(X[:2], sample_weight=[2, 1])
    assert w.objective_ == pytest.approx(dup.objective_, rel=1e-7)


def test_dr_planner_matches_solver(data):
    inst, X = data
    est = DrFleetPlanner(inst).fit(X)
    res = solve_dr(inst, estimate_ambiguity(check_demand_matrix(inst, X)))
    assert est.objective_ == pytest.approx(res.objective_value, rel=1e-9)
    dyn = est.predict(X, mode="dynamic_w")
    fixed = evaluate(inst, est.first_stage_, check_demand_matrix(inst, X)).column("TC")
    assert np.all(dyn <= fixed + 1e-7)


def test_params_and_clone(data):
    inst, _ = data
    est = DrFleetPlanner(inst, q_lo=0.1, method="region_dp")
    assert est.get_params()["q_lo"] == 0.1
    twin = clone(est)
    assert twin.get_params()["method"] == "region_dp" and not hasattr(twin, "fleet_")
    with pytest.raises(AttributeError):
        twin.predict(np.zeros((1, inst.n_cells)))


def test_ambiguity_estimator(data):
    inst, X = data
    est = AmbiguityEstimator().fit(X, instance=inst)
    ref = estimate_ambiguity(check_demand_matrix(inst, X))
    assert np.allclose(est.lower_, np.concatenate([a.ravel() for a in ref.lower]))
    bare = AmbiguityEstimator(0.2, 0.8).fit(X)
    assert np.allclose(bare.upper_, est.upper_) and np.allclose(bare.mean_, X.mean(axis=0))
    assert isinstance(check_demand_matrix(inst, X)[0], DemandScenario)
