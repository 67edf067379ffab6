"""End-to-end command line behavior: outputs, exit codes, determinism."""

import json

import pytest

from fedroute.cli import main
from fedroute.harness import Scenario, read_results, save_scenario
from fedroute.neural import load_weights


@pytest.fixture
def control_config(tmp_path):
    sc = Scenario(
        name="ctl", kind="control", topology="paper_fig3", seeds=(1,),
        delay_samples=4, policies=("spr-hops",), controller_counts=(1, 2),
    )
    path = tmp_path / "ctl.json"
    save_scenario(sc, path)
    return path


@pytest.fixture
def routing_config(tmp_path):
    sc = Scenario(
        name="rt", kind="routing", topology="paper_fig3", seeds=(1,),
        policies=("spr-hops", "drl", "fdrl"), eval_flows=5, training_pool=6,
        training_episodes=5, fl_rounds=1, fl_episodes_per_round=5,
        fl_node_count=2, hidden_sizes=(8,),
    )
    path = tmp_path / "rt.json"
    save_scenario(sc, path)
    return path


def test_inspect_builtin(capsys):
    assert main(["inspect", "--topology", "abilene"]) == 0
    out = capsys.readouterr().out
    assert "11 nodes" in out and "28 links" in out


def test_inspect_fig3_prints_domains_and_hosts(capsys):
    assert main(["inspect", "--topology", "paper_fig3"]) == 0
    out = capsys.readouterr().out
    assert "4 domains" in out
    assert "domain 0: s1 s2 s3 s4" in out
    assert "host h1 -> s1" in out


def test_unknown_flag_exits_one(capsys):
    assert main(["inspect", "--topology", "abilene", "--frobnicate"]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_command_exits_one():
    assert main(["simulate"]) == 1


def test_missing_config_exits_one_with_path(tmp_path, capsys):
    rc = main(["study-control", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)])
    assert rc == 1
    assert "nope.json" in capsys.readouterr().err


def test_invalid_config_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"name": "x", "kind": "control", "polcies": ["spr-hops"]}')
    assert main(["study-control", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "polcies" in capsys.readouterr().err


def test_study_control_writes_csv(control_config, tmp_path, capsys):
    out = tmp_path / "results"
    assert main(["study-control", "--config", str(control_config), "--out", str(out)]) == 0
    rows = read_results(out / "ctl-control.csv")
    assert len(rows) == 1 * 2 * 3 * 4  # seeds x counts x pairs x samples
    assert "wrote" in capsys.readouterr().out


def test_study_control_saturation_exits_two(control_config, tmp_path, capsys):
    cfg = json.loads(control_config.read_text())
    cfg["offered_load_rps"] = 1000.0
    sat = tmp_path / "sat.json"
    sat.write_text(json.dumps(cfg))
    assert main(["study-control", "--config", str(sat), "--out", str(tmp_path)]) == 2
    assert "runtime failure" in capsys.readouterr().err


def test_study_routing_writes_rows_and_checkpoints(routing_config, tmp_path):
    out = tmp_path / "results"
    assert main(["study-routing", "--config", str(routing_config), "--out", str(out)]) == 0
    rows = read_results(out / "rt-routing.csv")
    assert {r.policy for r in rows} == {"spr-hops", "drl", "fdrl"}
    for name in ("rt-drl-seed1.npz", "rt-fdrl-seed1.npz"):
        w = load_weights(out / name)
        assert w.layer_sizes[0] > 0


def test_study_reruns_are_byte_identical(control_config, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    for out in (out1, out2):
        assert main(["study-control", "--config", str(control_config), "--out", str(out)]) == 0
    a = (out1 / "ctl-control.csv").read_bytes()
    b = (out2 / "ctl-control.csv").read_bytes()
    assert a == b


def test_seed_override_changes_rows(control_config, tmp_path):
    out = tmp_path / "results"
    assert main([
        "study-control", "--config", str(control_config), "--out", str(out), "--seed", "9",
    ]) == 0
    rows = read_results(out / "ctl-control.csv")
    assert {r.seed for r in rows} == {9}


def test_jsonl_format_flag(control_config, tmp_path):
    out = tmp_path / "results"
    assert main([
        "study-control", "--config", str(control_config), "--out", str(out),
        "--format", "jsonl",
    ]) == 0
    rows = read_results(out / "ctl-control.jsonl")
    assert rows and rows[0].scenario == "ctl"


def test_train_then_evaluate_checkpoint(routing_config, tmp_path, capsys):
    out = tmp_path / "results"
    assert main(["train", "--config", str(routing_config), "--out", str(out)]) == 0
    ckpt = out / "rt-drl-seed1.npz"
    assert ckpt.exists()
    rounds_log = out / "rt-fdrl-seed1-rounds.jsonl"
    lines = [json.loads(line) for line in rounds_log.read_text().splitlines()]
    assert [rec["round"] for rec in lines] == [0]
    capsys.readouterr()
    assert main([
        "evaluate", "--config", str(routing_config), "--out", str(out),
        "--weights", str(ckpt),
    ]) == 0
    report = capsys.readouterr().out
    assert "spr-hops:" in report and "drl:" in report
    assert "utility" in report


def test_evaluate_missing_weights_exits_one(routing_config, tmp_path, capsys):
    rc = main([
        "evaluate", "--config", str(routing_config), "--out", str(tmp_path),
        "--weights", str(tmp_path / "ghost.npz"),
    ])
    assert rc == 1
    assert "ghost.npz" in capsys.readouterr().err


def test_export_plots_data_requires_results(control_config, tmp_path, capsys):
    out = tmp_path / "results"
    rc = main(["export-plots-data", "--config", str(control_config), "--out", str(out)])
    assert rc == 1
    assert "study-control" in capsys.readouterr().err


def test_export_plots_data_writes_figure_specs(control_config, routing_config, tmp_path):
    out = tmp_path / "results"
    assert main(["study-control", "--config", str(control_config), "--out", str(out)]) == 0
    assert main(["export-plots-data", "--config", str(control_config), "--out", str(out)]) == 0
    spec = json.loads((out / "ctl-delay_series.figure.json").read_text())
    assert spec["kind"] == "delay_series"
    assert spec["inputs"] == ["ctl-control.csv"]
    assert (out / "ctl-controller_averages.figure.json").exists()

    assert main(["study-routing", "--config", str(routing_config), "--out", str(out)]) == 0
    assert main(["export-plots-data", "--config", str(routing_config), "--out", str(out)]) == 0
    spec = json.loads((out / "rt-policy_comparison.figure.json").read_text())
    assert spec["group_by"] == ["policy"]
