import json

import pytest

from recurrence.cli import main

OBS = {"n": 1_000_000, "gamma": 13.815512557961274, "z0": 1000, "clones": [1] * 10 + [40]}


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_estimate_prints_four_estimates(tmp_path, capsys):
    path = tmp_path / "obs.json"
    path.write_text(json.dumps(OBS))
    code, out, _ = run(["estimate", "--config", str(path)], capsys)
    assert code == 0
    payload = json.loads(out)
    assert {"lambda0", "lambda1", "r1", "alpha"} <= set(payload)
    assert payload["lambda0"] == pytest.approx(-0.5, abs=1e-6)


def test_missing_config_is_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["estimate"])
    assert info.value.code == 2


@pytest.mark.parametrize("argv", [["bogus"], ["verify", "--colour", "red"]])
def test_unknown_subcommand_or_flag(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_bad_config_reports_json_error(tmp_path, capsys):
    path = tmp_path / "cfg.json"
    path.write_text("{broken")
    code, _, err = run(["experiment", "convergence", "--config", str(path)], capsys)
    assert code == 1
    assert json.loads(err)["error"] == "SchemaError"


def test_invalid_params_name_field(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"n": 100, "alpha": 0.5, "r0": 1, "d0": 1, "r1": 1.5, "d1": 1}))
    code, _, err = run(["simulate", "--config", str(path)], capsys)
    assert code == 1
    assert json.loads(err)["field"] == "lambda0"


def test_simulate(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text(json.dumps({"n": 1000, "alpha": 0.5, "r0": 0.5, "d0": 1, "r1": 1.5,
                                "d1": 1, "record_times": [1.0]}))
    code, out, _ = run(["simulate", "--config", str(path), "--seed", "3",
                        "--out", str(tmp_path / "sim")], capsys)
    assert code == 0
    assert json.loads(out)["termination"] == "Recurrence"
    assert (tmp_path / "sim" / "outcome.json").exists()
    assert (tmp_path / "sim" / "snapshots.csv").exists()


def test_experiment_writes_outputs(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n_values": [1000]}))
    out_dir = tmp_path / "conv"
    code, _, _ = run(["experiment", "convergence", "--config", str(cfg), "--seed", "2",
                      "--replicates", "2", "--threads", "2", "--out", str(out_dir)], capsys)
    assert code == 0
    for name in ("rows.csv", "summary.csv", "config-echo.json"):
        assert (out_dir / name).exists()
    echo = json.loads((out_dir / "config-echo.json").read_text())
    assert echo["input"] == {"n_values": [1000]}
    assert echo["resolved"]["base_seed"] == 2 and echo["resolved"]["parallelism"] == 2


def test_verify_writes_report(tmp_path, capsys):
    battery = tmp_path / "battery.json"
    battery.write_text(json.dumps({"extinction": {"runs": 20000}}))
    code, out, _ = run(["verify", "--seed", "7", "--config", str(battery),
                        "--out", str(tmp_path)], capsys)
    assert code == 0
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert report["passed"] and report == json.loads(out)
