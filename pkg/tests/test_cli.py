import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from lmfleet import DemandSpec, draw_means, estimate_ambiguity, evaluate, gen_scenarios, solve_dr, solve_sp
from lmfleet import io
from lmfleet.cli import main

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    err = capsys.readouterr().err
    return code, (json.loads(err.strip().splitlines()[-1]) if err.strip() else None)


@pytest.fixture
def small(tmp_path, capsys):
    inst = tmp_path / "inst.json"
    assert run(capsys, "gen-instance", "--regions", "3x2x3,2x2x3", "--fleet-bound", 3, "--fixed-cost", 5,
               "--seed", 1, "--out", inst)[0] == 0
    sc = tmp_path / "sc.csv"
    assert run(capsys, "gen-scenarios", "--instance", inst, "--count", 6, "--mean-range", 0, 3, "--seed", 2,
               "--out", sc)[0] == 0
    return tmp_path, inst, sc


def test_pipeline_smoke(small, capsys):
    d, inst, sc = small
    steps = [
        ("estimate-ambiguity", "--instance", inst, "--scenarios", sc, "--out", d / "amb.json"),
        ("solve-sp", "--instance", inst, "--scenarios", sc, "--out", d / "sp.json", "--log", d / "sp.csv"),
        ("solve-dr", "--instance", inst, "--ambiguity", d / "amb.json", "--out", d / "dr.json"),
        ("evaluate", "--instance", inst, "--solution", d / "sp.json", "--scenarios", sc, "--out", d / "ev.csv",
         "--aggregates", d / "agg.csv", "--summary", d / "ev.md"),
    ]
    for argv in steps:
        assert run(capsys, *argv)[0] == 0, argv
    sol = io.read_json(d / "sp.json")
    assert sol["meta"]["model"] == "SP" and sol["meta"]["status"] == "optimal"
    log = (d / "sp.csv").read_text().splitlines()
    assert log[0] == "model,status,objective,bound,gap,time_seconds,total_fleet"
    assert log[1].split(",")[5] == ""
    rows = (d / "ev.csv").read_text().splitlines()
    assert rows[0].startswith("scenario_id,TC,second_stage,TWT_0,TWT_1,TRT_0,TRT_1") and len(rows) == 7


def test_cli_is_a_thin_adapter(small, capsys):
    d, inst_p, sc_p = small
    inst = io.load_instance(inst_p)
    scen = io.load_scenarios(sc_p, inst)
    assert run(capsys, "solve-sp", "--instance", inst_p, "--scenarios", sc_p, "--out", d / "sp.json")[0] == 0
    assert run(capsys, "solve-dr", "--instance", inst_p, "--scenarios", sc_p, "--out", d / "dr.json")[0] == 0
    sp = solve_sp(inst, scen)
    dr = solve_dr(inst, estimate_ambiguity(scen))
    assert io.read_json(d / "sp.json")["meta"]["objective_value"] == pytest.approx(sp.objective_value, rel=1e-9)
    assert io.read_json(d / "dr.json")["meta"]["objective_value"] == pytest.approx(dr.objective_value, rel=1e-9)
    assert io.load_solution(d / "sp.json", inst).fleet == sp.first_stage.fleet
    assert run(capsys, "evaluate", "--instance", inst_p, "--solution", d / "sp.json", "--scenarios", sc_p,
               "--out", d / "ev.csv")[0] == 0
    assert (d / "ev.csv").read_text() == evaluate(inst, sp.first_stage, scen).rows_csv()
    spec = DemandSpec(mean_range=(0, 3), seed=2)
    direct = gen_scenarios(inst, draw_means(inst, spec), spec, 6)
    assert all(np.array_equal(a, b) for x, y in zip(direct, scen) for a, b in zip(x.demand, y.demand))


def test_missing_file_is_a_data_error(tmp_path, capsys):
    code, err = run(capsys, "solve-sp", "--instance", tmp_path / "nope.json", "--scenarios", tmp_path / "x.csv",
                    "--out", tmp_path / "o.json")
    assert code == 2 and err["exit_code"] == 2


def test_free_rho_exits_as_solver_failure(small, capsys):
    d, inst, _ = small
    amb = {"schema_version": io.SCHEMA_VERSION, "kind": "ambiguity",
           "regions": [{"mean": [[1.0, 3.0]] * 3, "lower": [[0.0, 0.0]] * 3, "upper": [[3.0, 3.0]] * 3},
                       {"mean": [[3.0, 3.0]] * 2, "lower": [[0.0, 0.0]] * 2, "upper": [[3.0, 3.0]] * 2}]}
    (d / "amb.json").write_text(json.dumps(amb))
    code, err = run(capsys, "solve-dr", "--instance", inst, "--ambiguity", d / "amb.json", "--rho-mode", "free",
                    "--out", d / "dr.json")
    assert code == 3 and "unbounded" in err["message"]
    assert not (d / "dr.json").exists()


def test_flags_beat_config_beat_defaults(small, capsys):
    d, inst, sc = small
    cfg = d / "cfg.toml"
    cfg.write_text('count = 4\nmean-range = [1, 2]\nseed = 3\n')
    assert run(capsys, "gen-scenarios", "--config", cfg, "--instance", inst, "--out", d / "a.csv")[0] == 0
    count = lambda p: len(io.load_scenarios(p, io.load_instance(inst)))  # noqa: E731
    assert count(d / "a.csv") == 4
    assert run(capsys, "gen-scenarios", "--config", cfg, "--count", 2, "--instance", inst,
               "--out", d / "b.csv")[0] == 0
    assert count(d / "b.csv") == 2
    bad = d / "bad.toml"
    bad.write_text("colour = 'red'\n")
    code, err = run(capsys, "gen-scenarios", "--config", bad, "--instance", inst, "--count", 2, "--seed", 1,
                    "--out", d / "c.csv")
    assert code == 2 and "colour" in err["message"]


@pytest.mark.parametrize("argv", [
    ["solve-sp", "--bogus"],
    ["gen-instance", "--preset", "1", "--out", "x.json"],  # randomized without a seed
    ["gen-instance", "--seed", "1"],  # no --out
    ["evaluate", "--mode", "sideways"],
    [],
])
def test_usage_errors(argv, capsys):
    assert run(capsys, *argv)[0] == 1


def test_ingest_from_fixture(tmp_path, capsys):
    out = tmp_path / "ing"
    code, _ = run(capsys, "ingest", "--trips", DATA / "trips_small.csv", "--stations", DATA / "stations.toml",
                  "--stops", "3,4", "--trains", 6, "--first-window", "2024-03-04T17:00:00", "--days", 6,
                  "--seed", 0, "--out-dir", out)
    assert code == 0
    meta = io.read_json(out / "ingest_meta.json")
    assert meta["trips_loaded"] == 1440 and meta["rows_skipped"] == 0
    inst = io.load_instance(out / "instance.json")
    assert len(io.load_scenarios(out / "scenarios.csv", inst)) == 6
    assert (out / "stop_stats.csv").read_text().startswith("region,stop,mu,sigma,min,max,q20,q80")


def test_console_script(tmp_path):
    res = subprocess.run([sys.executable, "-m", "lmfleet", "gen-instance", "--preset", "1", "--seed", "0",
                          "--out", str(tmp_path / "i.json")], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert io.load_instance(tmp_path / "i.json").n_regions == 4


def test_means_seed_shares_means_across_draws(small, capsys):
    d, inst_p, sc_p = small
    assert run(capsys, "gen-scenarios", "--instance", inst_p, "--count", 6, "--mean-range", 0, 3, "--seed", 9,
               "--means-seed", 2, "--out", d / "oos.csv")[0] == 0
    inst = io.load_instance(inst_p)
    spec = DemandSpec(mean_range=(0, 3), seed=9)
    mu = draw_means(inst, DemandSpec(mean_range=(0, 3), seed=2))
    direct = gen_scenarios(inst, mu, spec, 6)
    got = io.load_scenarios(d / "oos.csv", inst)
    assert all(np.array_equal(a, b) for x, y in zip(direct, got) for a, b in zip(x.demand, y.demand))
    assert (d / "oos.csv").read_text() != sc_p.read_text()
