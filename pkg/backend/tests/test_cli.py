import json

import numpy as np
import pytest
from click.testing import CliRunner

from app import main
from app.closed_loop import simulate
from app.main import cli
from app.persistence import report_fields, write_trajectory_csv
from app.steering import fishhook


@pytest.fixture
def runner():
    return CliRunner()


def write_config(tmp_path, text):
    path = tmp_path / "run.yml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def read_report(directory):
    return json.loads((directory / "report.json").read_text(encoding="utf-8"))


def test_bad_yaml_exits_2(runner, tmp_path):
    config = write_config(tmp_path, "simulation:\n  n_nodes: [61\n")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["optimize", "--config", config, "--out", str(out), "--quiet"])
    assert result.exit_code == 2
    report = read_report(out)
    assert report["status"] == "error"
    assert report["exit_code"] == 2
    assert report["verb"] == "optimize"


def test_invalid_field_exits_2(runner, tmp_path):
    config = write_config(tmp_path, "simulation:\n  n_nodes: 1\n")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["validate", "--config", config, "--out", str(out)])
    assert result.exit_code == 2
    assert "simulation.n_nodes" in read_report(out)["message"]


def test_unknown_profile_exits_2(runner, tmp_path):
    config = write_config(tmp_path, "validation:\n  profiles: [slalom]\n")
    result = runner.invoke(cli, ["validate", "--config", config, "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_sweep_outside_fishhook_family_exits_2(runner, tmp_path):
    config = write_config(tmp_path, "sweep:\n  profile: double_lane_change\n")
    result = runner.invoke(cli, ["sweep", "--config", config, "--out", str(tmp_path / "out")])
    assert result.exit_code == 2


def test_analyze_needs_trajectory(runner, tmp_path):
    result = runner.invoke(cli, ["analyze", "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "analysis.trajectory" in read_report(tmp_path / "out")["message"]


def test_validate_straight_run(runner, tmp_path):
    config = write_config(tmp_path, "\n".join([
        "simulation:",
        "  tf: 0.3",
        "steering:",
        "  profile: straight",
        "validation:",
        "  profiles: [straight]",
        "  phi3_conservative: null",
        "  step: 0.01",
        "seed: 7",
    ]))
    out = tmp_path / "out"
    result = runner.invoke(cli, ["validate", "--config", config, "--out", str(out)])
    assert result.exit_code == 0
    report = read_report(out)
    assert report["status"] == "ok"
    assert report["seed"] == 7
    assert report["phi3"] == -4796.2
    assert report["validation"][0]["profile"] == "straight"
    assert report["validation"][0]["all_satisfied"] is True
    assert len(report["validation"]) == 1
    assert report["comparison"] is None
    assert (out / "validate_straight.csv").exists()
    assert (out / "plot_validate_straight.py").exists()
    assert (out / "logs" / "rollover.log").exists()
    assert np.loadtxt(out / "validate_straight.csv", delimiter=",", skiprows=1).shape == (31, 23)


def test_analyze_recovers_feedback_gain(runner, tmp_path, cfg):
    run = simulate(cfg, -4796.2, fishhook(), np.linspace(0.0, 0.8, 401))
    csv_path = write_trajectory_csv(tmp_path / "closed_loop.csv", run)
    config = write_config(tmp_path, f"analysis:\n  trajectory: {csv_path.as_posix()}\n")
    out = tmp_path / "out"
    result = runner.invoke(cli, ["analyze", "--config", config, "--out", str(out)])
    assert result.exit_code == 0
    report = read_report(out)
    assert report["phi3"] == pytest.approx(-4796.2, rel=1e-6)
    assert report["dominance"]["leading"] == "theta_z_dot"
    assert report["rollover"]["max_abs_theta_x"] < 0.35


def test_validate_runs_configured_maneuver_first(runner, tmp_path):
    config = write_config(tmp_path, "\n".join([
        "simulation:",
        "  tf: 0.4",
        "steering:",
        "  fishhook:",
        "    peak_deg: 3.0",
        "    reverse_deg: -3.0",
        "validation:",
        "  profiles: [straight]",
        "  phi3_conservative: null",
        "  step: 0.01",
    ]))
    out = tmp_path / "out"
    result = runner.invoke(cli, ["validate", "--config", config, "--out", str(out), "--quiet"])
    assert result.exit_code == 0
    profiles = [summary["profile"] for summary in read_report(out)["validation"]]
    assert profiles == ["fishhook_params", "straight"]
    assert (out / "validate_fishhook_params.csv").exists()


def test_short_breakpoints_exit_2(runner, tmp_path):
    config = write_config(tmp_path, "\n".join([
        "steering:",
        "  breakpoints: [[0.0, 0.0], [0.5, 4.0]]",
        "validation:",
        "  profiles: []",
    ]))
    out = tmp_path / "out"
    result = runner.invoke(cli, ["validate", "--config", config, "--out", str(out)])
    assert result.exit_code == 2
    report = read_report(out)
    assert report["status"] == "error"
    assert "steering.breakpoints" in report["message"]


def test_unexpected_error_still_writes_report(runner, tmp_path, monkeypatch):
    def broken(config, out_dir, source=None):
        raise RuntimeError("matrix went missing")

    monkeypatch.setitem(main.RUNS, "optimize", broken)
    out = tmp_path / "out"
    result = runner.invoke(cli, ["optimize", "--out", str(out), "--quiet"])
    assert result.exit_code == 3
    report = read_report(out)
    assert report["status"] == "error"
    assert report["exit_code"] == 3
    assert "RuntimeError: matrix went missing" in report["message"]
    assert set(report) == set(report_fields())
