import json
import math
import os

import numpy as np
import pytest

from aerograsp.autonomy import GraspEvent, Outcome
from aerograsp.harness import cli
from aerograsp.harness.bench import mission_raw, pooled, run
from aerograsp.harness.metrics import (compute_avg_time, compute_error_rate, compute_hover_rmse,
                                       compute_peak_offset, compute_success_rate, dumps,
                                       metrics_report)
from aerograsp.harness.scenario import ScenarioError, parse_scenario, resolve
from aerograsp.harness.telemetry import COLUMNS, TelemetryWriter, parse_lines

SCENARIOS = os.path.join(os.path.dirname(__file__), "..", "scenarios")


def _events(*outcomes):
    return [GraspEvent(i, 0.0, outcome=o) for i, o in enumerate(outcomes)]


def test_success_rate_examples():
    assert compute_success_rate(_events(*[Outcome.FULL] * 7, Outcome.MISS)) == 0.875
    assert compute_success_rate(_events(Outcome.FULL, Outcome.PARTIAL, Outcome.MISS)) == \
        pytest.approx(2 / 3)
    assert compute_success_rate([]) is None
    # aborted selections are not grasp trials
    assert compute_success_rate(_events(Outcome.FULL, Outcome.ABORTED)) == 1.0


def test_avg_time_and_error_rate_examples():
    ev = [GraspEvent(0, 0.0, 2.0, 4.0, Outcome.FULL), GraspEvent(1, 10.0, 13.0, 16.0, Outcome.FULL)]
    assert compute_avg_time(ev) == pytest.approx(5.0)
    assert compute_avg_time([]) is None
    ev = _events(Outcome.FULL, Outcome.FULL, Outcome.PARTIAL, Outcome.DROPPED)
    assert compute_error_rate(ev) == pytest.approx(0.25)
    assert compute_error_rate(_events(Outcome.MISS)) is None


def _track(err):
    t = np.arange(len(err)) * 0.01
    z = np.zeros(len(err))
    return {"t": t, "x": err, "y": z, "z": z + 1, "ref_x": z, "ref_y": z, "ref_z": z + 1}


def test_hover_rmse_examples():
    assert compute_hover_rmse(_track(np.full(100, 0.1)), (0, 1)) == pytest.approx(0.1)
    assert compute_hover_rmse(_track(np.zeros(100)), (0, 1)) == 0.0
    t = np.arange(10000) * 0.01
    sine = 0.2 * np.sin(2 * math.pi * t)
    assert compute_hover_rmse(_track(sine), (0, 100)) == pytest.approx(0.2 / math.sqrt(2), rel=1e-3)
    assert compute_peak_offset(_track(sine), (0, 100)) == pytest.approx(0.2, rel=1e-3)
    with pytest.raises(ValueError):
        compute_hover_rmse(_track(np.zeros(10)), (5, 6))


def test_telemetry_roundtrip_and_monotonic_time():
    w = TelemetryWriter({"name": "x"})
    row = dict.fromkeys(COLUMNS, 0.1)
    row.update(t=0.0, phase="Hover", target_id=2, tracker_lost=0, jaw="open", event="")
    row = [row[c] for c in COLUMNS]
    w.write(row)
    with pytest.raises(ValueError):
        w.write(row)
    tel = parse_lines(w.lines)
    assert tel.meta["name"] == "x" and len(tel) == 1 and tel["phase"] == ["Hover"]
    assert tel["target_id"][0] == 2 and tel["x"][0] == 0.1


def test_scenario_errors():
    with pytest.raises(ScenarioError):
        parse_scenario({"include_defaults": "mission", "vehicel": {}})
    with pytest.raises(ScenarioError):
        resolve({"include_defaults": "nope"})
    with pytest.raises(ScenarioError):
        parse_scenario({"include_defaults": "mission", "duration": 10,
                        "metrics": {"window": [20, 30]}})


def test_empty_mission_lands():
    tel, rep = run(mission_raw(0, 1, noiseless=True))
    phases = [p for _, p in rep["phase_log"]]
    assert phases == ["ArmMotors", "TakeOff", "Hover", "DetectApples", "SelectTarget", "Landing",
                      "Disarm"]
    assert rep["grasp_success_rate"] is None and not rep["aborted"]


def test_replay_matches_live_report():
    tel, rep = run(mission_raw(2, 4))
    assert dumps(metrics_report(tel)) == dumps(rep)
    assert pooled([rep])["success_rate"] == rep["grasp_success_rate"]


def test_cli_run_is_deterministic_and_replayable(tmp_path, capsys):
    scen = os.path.join(SCENARIOS, "mission_3.json")
    a, b = tmp_path / "a", tmp_path / "b"
    assert cli.main(["run", "--scenario", scen, "--seed", "5", "--out", str(a)]) == 0
    assert cli.main(["run", "--scenario", scen, "--seed", "5", "--out", str(b)]) == 0
    assert (a / "telemetry.csv").read_bytes() == (b / "telemetry.csv").read_bytes()
    replay = tmp_path / "replay.json"
    assert cli.main(["replay-metrics", "--telemetry", str(a / "telemetry.csv"),
                     "--out", str(replay)]) == 0
    assert replay.read_text() == (a / "metrics.json").read_text()
    assert json.loads((a / "metrics.json").read_text())["seed"] == 5


def test_cli_exit_codes(tmp_path, monkeypatch, capsys):
    assert cli.main(["validate", "--scenario", os.path.join(SCENARIOS, "bad.json")]) == 2
    assert cli.main(["validate", "--scenario", os.path.join(SCENARIOS, "mission_3.json")]) == 0
    assert cli.main(["replay-metrics", "--telemetry", str(tmp_path / "missing.csv")]) == 2
    assert cli.main(["schema"]) == 0
    assert "properties" in json.loads(capsys.readouterr().out.split("\n", 1)[1])
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["run", "--scenario", os.path.join(SCENARIOS, "mission_3.json")]) == 0
    assert (tmp_path / "env" / "telemetry.csv").exists()


def test_scalar_gain_broadcasts_to_all_axes():
    cfg = parse_scenario({"include_defaults": "hover_bench", "control": {"alpha": 0.5, "beta": 0.1}})
    assert cfg.control.alpha == (0.5, 0.5, 0.5) and cfg.control.beta == (0.1, 0.1, 0.1)
