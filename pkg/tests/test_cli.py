import json

import pytest

from gfsim import cli, sim, theory
from gfsim.seqmat import SpreadingMatrix, construct_peg, cycle_census


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze(capsys):
    code, out, _ = run(["analyze", "--lambda", "0.5", "--colweight", "2", "--ratio", "0.5"], capsys)
    assert code == 0
    rec = json.loads(out)
    assert rec["value"]["rfa"] == 0.765625
    assert rec["value"]["g_upper_bound"] == pytest.approx(-0.25)
    assert rec["input"]["lambda"] == 0.5


def test_optimize(capsys):
    code, out, _ = run(["optimize", "--tau", "1"], capsys)
    assert code == 0
    r = json.loads(out)["value"]
    assert r == pytest.approx(0.5, abs=0.01)
    assert r == theory.optimize_r(1.0)


def test_construct_and_census(tmp_path, capsys):
    p = tmp_path / "m.txt"
    code, out, _ = run(["construct", "--rows", "40", "--cols", "80", "--colweight", "2",
                        "--seed", "4", "--out", str(p)], capsys)
    assert code == 0
    assert SpreadingMatrix.load(p) == construct_peg(40, 80, 2, seed=4)
    census = json.loads(out)["value"]
    code, out, _ = run(["census", str(p)], capsys)
    assert json.loads(out)["value"] == census == cycle_census(construct_peg(40, 80, 2, 4)).to_dict()


def test_construct_target_census(tmp_path, capsys):
    p = tmp_path / "m.txt"
    code, out, _ = run(["construct", "--rows", "30", "--cols", "60", "--colweight", "2",
                        "--seed", "1", "--target-census", "2,0,0", "--out", str(p)], capsys)
    assert code == 0
    assert json.loads(out)["value"]["len4"] == 2


@pytest.mark.parametrize("argv", [
    ["construct", "--rows", "4", "--cols", "3", "--colweight", "2"],
    ["construct", "--rows", "4", "--cols", "6", "--colweight", "2", "--target-census", "1,2"],
    ["analyze", "--lambda", "1.5", "--colweight", "2", "--ratio", "0.5"],
    ["optimize", "--tau", "-1"],
    ["simulate", "--config", "/nonexistent.json"],
])
def test_usage_errors_exit_2(argv, capsys, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code, _, err = run(argv, capsys)
    assert code == 2
    assert "error" in err


def test_argparse_errors_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["analyze", "--lambda", "abc"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_runtime_error_exit_1(capsys):
    code, _, err = run(["optimize", "--tau", "1e-9", "--colweight", "10"], capsys)
    assert code == 1
    assert "NoFeasibleRatioError" in err
    code, _, err = run(["census", "/nonexistent/matrix.txt"], capsys)
    assert code == 1


def test_bad_config_key(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"N": 40, "wrong": 1}))
    code, _, err = run(["sweep", "--config", str(p)], capsys)
    assert code == 2


def test_simulate_and_sweep_match_library(tmp_path, capsys):
    cfg = dict(N=40, L=20, K=6, lambdas=[0.1, 0.2], snrs_db=[5.0, 10.0], trials=5, seed=0)
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    out_csv = tmp_path / "r.csv"
    code, out, _ = run(["sweep", "--config", str(p), "--out", str(out_csv), "--workers", "1"], capsys)
    assert code == 0
    lib = sim.sweep(sim.ScenarioConfig(**cfg), workers=1)
    assert json.loads(out)["value"] == [r.row() for r in lib]
    assert len(sim.read_csv(out_csv)) == 4

    code, out, _ = run(["simulate", "--config", str(p), "--lambda", "0.2", "--snr", "10",
                        "--seed", "7", "--workers", "1"], capsys)
    assert code == 0
    one = sim.sweep(sim.ScenarioConfig(**{**cfg, "lambdas": [0.2], "snrs_db": [10.0], "seed": 7}),
                    workers=1)[0]
    assert json.loads(out)["value"] == one.row()
