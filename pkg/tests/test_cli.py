import csv
import json

import pytest

from wavc.cli import build_parser, main


def _rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def test_every_subcommand_takes_seed_and_out():
    parser = build_parser()
    for cmd, extra in (("simulate", []), ("estimate", []), ("control", []), ("experiment", []),
                       ("rank-pmu", []), ("plot-data", ["--report", "r", "--bus", "4"])):
        args = parser.parse_args([cmd, "--seed", "3", "--out", "x"] + extra)
        assert args.seed == 3 and args.out == "x"


def test_simulate(tmp_path, capsys):
    assert main(["simulate", "--case", "case3", "--duration", "2", "--seed", "1", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "trajectory_1.csv")
    assert rows[0][0] == "t" and len(rows) == 121
    assert (tmp_path / "trajectory_1.png").exists()


def test_estimate(tmp_path):
    assert main(["estimate", "--case", "case3", "--duration", "120", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "estimate_0.json").read_text())
    assert doc["bus_ids"] == [2, 3, 4]
    assert doc["roundtrip"] < 1e-6
    assert (tmp_path / "j_qv_0.png").exists()


def test_rank_pmu(tmp_path, capsys):
    assert main(["rank-pmu", "--case", "case39", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "pmu_ranking.csv")
    assert rows[0] == ["rank", "bus", "score"] and len(rows) == 20
    assert (tmp_path / "pmu_ranking.png").exists()


def test_control_and_plot_data(tmp_path, capsys):
    out = tmp_path / "ctl"
    assert main(["control", "--case", "case3", "--scenario", "scenario_quiescent", "--controlled", "3",
                 "--mode", "model_based", "--out", str(out)]) == 0
    assert "model_based" in capsys.readouterr().out
    assert main(["plot-data", "--report", str(out), "--bus", "2", "--out", str(tmp_path / "pd")]) == 0
    rows = _rows(tmp_path / "pd" / "plot_bus2.csv")
    assert rows[0] == ["t", "v_model_based"]
    assert (tmp_path / "pd" / "plot_bus2.png").exists()


def test_experiment_custom_spec(tmp_path, capsys):
    spec = {"name": "tiny", "case": "case3", "scenario": "scenario_quiescent", "controlled": [3],
            "modes": ["none"], "seeds": [5], "monitor_bus": 2}
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(spec))
    assert main(["experiment", "--spec", str(path), "--out", str(tmp_path / "res")]) == 0
    assert (tmp_path / "res" / "report.json").exists()
    assert (tmp_path / "res" / "voltage_bus2_seed5.png").exists()


def test_errors_exit_with_code_2(tmp_path, capsys):
    assert main(["experiment", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_mode_rejected():
    with pytest.raises(SystemExit):
        main(["control", "--mode", "magic"])
