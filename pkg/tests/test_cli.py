import argparse
import json

import pytest

from run_sda import main, parse_grid, parse_floats
from utils.profile_io import load_profile


@pytest.fixture
def profile_file(tmp_path, capsys):
    path = tmp_path / "prof.csv"
    assert main(["profile", "--dist", "gaussian", "--sigma", "1", "--format", "csv", "--out", str(path)]) == 0
    return path


def test_parse_grid():
    assert parse_grid("1:2:7") == [1, 3, 5, 7]
    assert parse_grid("3:5") == [3, 4, 5]
    assert parse_grid("3,5,9") == [3, 5, 9]
    assert parse_grid("11") == [11]
    with pytest.raises(argparse.ArgumentTypeError):
        parse_grid("1:0:5")
    with pytest.raises(argparse.ArgumentTypeError):
        parse_floats("0.1,abc")


def test_profile_writes_data_sidecar_and_manifest(profile_file, capsys):
    out = capsys.readouterr().out
    assert out.startswith("# schema: sda-profile/1 manifest: prof.manifest.json")
    summary = json.loads(profile_file.with_suffix(".json").read_text(encoding="utf-8"))
    assert summary["t_bar_h1"] == 1
    assert summary["valid"] is True
    manifest = json.loads((profile_file.parent / "prof.manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "profile"
    assert set(manifest["digests"]) == {"prof.csv", "prof.json"}


def test_binomial_profile_from_eps(capsys):
    assert main(["profile", "--dist", "binomial", "--n", "5", "--eps", "0.05", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    model = payload["summary"]["meta"]["model"]
    assert model["theta0"] == pytest.approx(0.45)
    assert model["theta1"] == pytest.approx(0.55)
    assert model["n"] == 5


def test_missing_sigma_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        main(["profile", "--dist", "gaussian"])
    assert info.value.code == 2
    assert "--sigma" in capsys.readouterr().err


def test_invalid_model_exits_with_input_error():
    assert main(["profile", "--dist", "gaussian", "--sigma", "1", "--pmd", "0.6", "--pfa", "0.5"]) == 2


def test_aggregate_from_profile_file(profile_file, capsys):
    capsys.readouterr()
    assert main(["aggregate", "--profile", str(profile_file), "--n", "3", "--q", "2", "--format", "json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["summary"]["schema"] == "sda-group/1"
    assert payload["summary"]["p_c"] + payload["summary"]["p_w"] == pytest.approx(1.0, abs=1e-8)
    assert payload["rows"][0]["t"] == 1


def test_aggregate_csv_columns(profile_file, capsys):
    capsys.readouterr()
    assert main(["aggregate", "--profile", str(profile_file), "--n", "3", "--q", "1", "--format", "csv"]) == 0
    assert capsys.readouterr().out.splitlines()[1] == "t,p0_group,p1_group"
    assert profile_file.read_text(encoding="utf-8").splitlines()[1] == "t,p0_h0,p1_h0,p0_h1,p1_h1"


def test_aggregate_rule_shortcut(profile_file, capsys):
    capsys.readouterr()
    assert main(["aggregate", "--profile", str(profile_file), "--n", "9", "--rule", "majority",
                 "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["summary"]["q"] == 5


def test_table_output_has_banner(profile_file, capsys):
    capsys.readouterr()
    assert main(["aggregate", "--profile", str(profile_file), "--n", "1", "--q", "1"]) == 0
    out = capsys.readouterr().out
    assert "q out of N Sequential Decision Aggregation" in out
    assert "+---" in out


def test_sweep_rows(profile_file, capsys):
    capsys.readouterr()
    assert main(["sweep", "--profile", str(profile_file), "--n-grid", "1:2:5", "--rule", "fastest",
                 "--format", "csv"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == "# schema: sda-sweep/1"
    assert lines[1] == "N,q,p_c,p_w,p_nd,e_t,error"
    assert len(lines) == 2 + 3


def test_asymptotics_with_monotonicity(profile_file, capsys):
    capsys.readouterr()
    assert main(["asymptotics", "--profile", str(profile_file), "--n-grid", "3:2:7", "--format", "json"]) == 0
    summary = json.loads(capsys.readouterr().out)["summary"]
    assert summary["theorem_violations"] == 0
    assert summary["fastest"]["t_bar"] == 1
    assert summary["majority_time"]["case"] == "A1"
    assert [r["N"] for r in summary["majority_pw"]] == [3, 5, 7]


def test_simulate_is_reproducible(profile_file, capsys):
    argv = ["simulate", "--profile", str(profile_file), "--n", "5", "--q", "3",
            "--replicates", "2000", "--seed", "7", "--format", "csv"]
    capsys.readouterr()
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert main(argv) == 0
    assert capsys.readouterr().out == first


def test_data_digests_are_reproducible(profile_file, tmp_path):
    digests = []
    for name in ("a", "b"):
        out = tmp_path / name / "sim.csv"
        assert main(["simulate", "--profile", str(profile_file), "--n", "3", "--q", "1",
                     "--replicates", "1000", "--seed", "7", "--format", "csv", "--out", str(out)]) == 0
        manifest = json.loads((out.parent / "sim.manifest.json").read_text(encoding="utf-8"))
        digests.append(manifest["digests"])
    assert digests[0] == digests[1]


def test_raw_simulation_rejects_profile(profile_file):
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--raw", "--profile", str(profile_file), "--n", "3", "--q", "1"])
    assert info.value.code == 2


def test_calibration_failure_is_a_numerical_error():
    assert main(["calibrate", "--dist", "gaussian", "--sigma", "1", "--target", "0.3", "--n", "1",
                 "--rule", "fastest", "--bracket", "3,8"]) == 3


def test_calibrate_reports_threshold(capsys):
    assert main(["calibrate", "--dist", "gaussian", "--sigma", "1", "--target", "0.1", "--n", "1",
                 "--rule", "fastest", "--format", "json"]) == 0
    summary = json.loads(capsys.readouterr().out)["summary"]
    assert 1.3 < summary["eta"] < 2.2
    assert summary["e_t_infinite"] is False


def test_profile_file_loads_back(profile_file):
    loaded = load_profile(profile_file)
    assert loaded.t_max == json.loads(profile_file.with_suffix(".json").read_text(encoding="utf-8"))["t_max"]
    assert loaded.under_h1.p_say1.sum() + loaded.under_h1.p_say0.sum() + loaded.under_h1.p_nd == pytest.approx(1.0)
