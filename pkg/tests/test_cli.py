import csv
import json

import pytest

from safebench.benchmark.io import read_csv
from safebench.cli import main


def cli(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


@pytest.fixture
def scenarios(tmp_path):
    path = tmp_path / "s.json"
    assert cli("gen-scenarios", "--seed", 7, "--count", 6, "--duration", 4, "--out", path) == 0
    return path


def test_gen_scenarios_idempotent(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert cli("gen-scenarios", "--seed", 7, "--count", 40, "--out", a) == 0
    assert cli("gen-scenarios", "--seed", 7, "--count", 40, "--out", b) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(json.loads(a.read_text())["scenarios"]) == 40


def test_gen_scenarios_rejects_zero_count(tmp_path):
    assert cli("gen-scenarios", "--seed", 7, "--count", 0, "--out", tmp_path / "s.json") == 1


def test_gen_scenarios_prefix(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    cli("gen-scenarios", "--seed", 3, "--count", 2, "--out", a)
    cli("gen-scenarios", "--seed", 3, "--count", 5, "--out", b)
    short = json.loads(a.read_text())["scenarios"]
    long = json.loads(b.read_text())["scenarios"]
    assert long[:2] == short


def test_run_one_row_per_scenario(tmp_path, scenarios):
    out = tmp_path / "r.csv"
    code = cli("run", "--model", "ball", "--alg", "sss", "--lambda", -1, "--dmin", 1, "--k", 1,
               "--scenarios", scenarios, "--out", out)
    assert code == 0
    rows = read_csv(out)
    assert len(rows) == 6 and {r["algorithm"] for r in rows} == {"sss"}
    assert rows[0]["dmin"] == "1.0" and rows[0]["lambda"] == "-1.0" and rows[0]["eta"] == ""


def test_run_all_gives_five_rows_each_and_logs(tmp_path, scenarios):
    out, logs = tmp_path / "r.csv", tmp_path / "logs"
    assert cli("run", "--alg", "all", "--scenarios", scenarios, "--out", out, "--logs", logs) == 0
    rows = read_csv(out)
    assert len(rows) == 30
    assert sorted({r["algorithm"] for r in rows}) == ["bfm", "pfm", "sma", "ssa", "sss"]
    traces = sorted(logs.glob("*.jsonl"))
    assert len(traces) == 30
    lines = traces[0].read_text().splitlines()
    assert len(lines) == 80
    assert set(json.loads(lines[0])) >= {"t", "robot_state", "human_state", "u0", "u", "phi"}
    # passive human: identical trajectories under every controller
    humans = {
        alg: [json.loads(line)["human_state"] for line in (logs / f"ball_{alg}_000.jsonl").read_text().splitlines()]
        for alg in ("pfm", "sss")
    }
    assert humans["pfm"] == humans["sss"]


def test_perfect_sensing_rerun_identical(tmp_path, scenarios):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert cli("run", "--alg", "bfm", "--perfect-sensing", "--scenarios", scenarios, "--out", out) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_rejects_bad_parameter(tmp_path, scenarios):
    assert cli("run", "--alg", "sss", "--lambda", 1, "--scenarios", scenarios, "--out", tmp_path / "r.csv") == 1


def test_missing_scenario_file_is_runtime_error(tmp_path):
    assert cli("run", "--scenarios", tmp_path / "nope.json", "--out", tmp_path / "r.csv") == 2


def test_single_point_sweep(tmp_path, scenarios):
    out = tmp_path / "sw"
    run = tmp_path / "r.csv"
    args = ("--alg", "ssa", "--scenarios", scenarios)
    assert cli("sweep", *args, "--dmin-grid", "1.5", "--k-grid", "1", "--param-grid", "-1", "--out", out) == 0
    assert cli("run", *args, "--dmin", 1.5, "--k", 1, "--eta", -1, "--out", run) == 0
    (point,) = read_csv(out / "points.csv")
    rows = read_csv(run)
    mean_eff = sum(float(r["efficiency"]) for r in rows) / len(rows)
    assert float(point["efficiency"]) == pytest.approx(mean_eff, abs=1e-12)
    (frontier,) = read_csv(out / "frontier.csv")
    assert frontier["safety"] == point["safety"]


def test_sweep_null_hybrid_when_everything_collides(tmp_path, capsys):
    # a tiny d_min and a timid rate let the robot run into the human
    path = tmp_path / "s.json"
    path.write_text(json.dumps({"scenarios": [{
        "seed": 1, "robot_goals": [[-3, 0], [3, 0]], "human_goals": [[0, 0], [0, 0]],
        "duration": 4.0, "fps": 20,
    }]}))
    out = tmp_path / "sw"
    code = cli("sweep", "--alg", "pfm", "--human", "static", "--perfect-sensing", "--scenarios", path,
               "--dmin-grid", "0.1", "--k-grid", "0.1", "--param-grid", "0.001", "--out", out)
    assert code == 0
    assert "pfm: hybrid null" in capsys.readouterr().out
    assert read_csv(out / "hybrid.csv") == [{"algorithm": "pfm", "hybrid": "null"}]


def test_frontier_csv_sorted(tmp_path, scenarios):
    out = tmp_path / "sw"
    cli("sweep", "--alg", "bfm", "--scenarios", scenarios, "--dmin-grid", "0.5,1,2", "--k-grid", "0.5,2",
        "--param-grid", "-0.1,-10", "--out", out)
    rows = read_csv(out / "frontier.csv")
    s = [float(r["safety"]) for r in rows]
    e = [float(r["efficiency"]) for r in rows]
    assert s == sorted(s) and e == sorted(e, reverse=True)
    assert len(read_csv(out / "points.csv")) == 12


def _phase(tmp_path, alg, resolution=21):
    out = tmp_path / f"{alg}.csv"
    assert cli("phase", "--alg", alg, "--resolution", resolution, "--out", out) == 0
    with out.open() as fh:
        return list(csv.DictReader(fh))


def test_phase_ssa_zero_correction_exactly_where_safe(tmp_path):
    for row in _phase(tmp_path, "ssa"):
        if row["phi"] != "nan" and float(row["phi"]) < 0:
            assert row["ux"] == row["u0x"] and row["uy"] == row["u0y"]


def test_phase_bfm_sss_differ_only_where_safe(tmp_path):
    bfm, sss = _phase(tmp_path, "bfm"), _phase(tmp_path, "sss")
    differing = [b for b, s in zip(bfm, sss) if (b["ux"], b["uy"]) != (s["ux"], s["uy"])]
    assert differing
    assert all(float(r["phi"]) < 0 for r in differing)


def test_phase_single_row(tmp_path):
    rows = _phase(tmp_path, "sss", resolution=1)
    assert len(rows) == 1
    assert list(rows[0]) == ["x", "y", "phi", "u0x", "u0y", "ux", "uy"]


def test_compare_summarises_per_algorithm(tmp_path, scenarios, capsys):
    run = tmp_path / "r.csv"
    cli("run", "--alg", "all", "--scenarios", scenarios, "--out", run)
    capsys.readouterr()
    summary = tmp_path / "c.csv"
    assert cli("compare", run, "--out", summary) == 0
    rows = read_csv(summary)
    assert [r["algorithm"] for r in rows] == ["bfm", "pfm", "sma", "ssa", "sss"]
    assert all(r["episodes"] == "6" for r in rows)


def test_config_file_supplies_options(tmp_path, scenarios):
    out = tmp_path / "from_ini.csv"
    ini = tmp_path / "run.ini"
    ini.write_text(f"[defaults]\nmodel = ball\n\n[run]\nalg = ssa\neta = -2\nscenarios = {scenarios}\nout = {out}\n")
    assert cli("--config", ini, "run") == 0
    rows = read_csv(out)
    assert {r["algorithm"] for r in rows} == {"ssa"} and rows[0]["eta"] == "-2.0"
    # command line wins over the file
    assert cli("--config", ini, "run", "--eta", -3) == 0
    assert read_csv(out)[0]["eta"] == "-3.0"


def test_config_file_unknown_key(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[run]\nspeed = 3\n")
    assert cli("--config", ini, "run", "--out", tmp_path / "r.csv") == 1
