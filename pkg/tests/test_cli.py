import json

import pytest
import yaml

from pannav.cli import main
from pannav.sim.scenario import bundled_path

SMALL = {
    "duration": 3.0,
    "sensors": {"lidar": {"channels": 16, "azimuth_steps": 180}},
    "planner": {"max_iterations": 150},
}


def scenario_file(tmp_path, **changes):
    doc = yaml.safe_load(bundled_path("adversarial-crossing").read_text())
    for k, v in {**SMALL, **changes}.items():
        doc[k] = {**doc[k], **v} if isinstance(v, dict) and isinstance(doc.get(k), dict) else v
    p = tmp_path / "s.yaml"
    p.write_text(yaml.safe_dump(doc))
    return p


def test_validate_ok(tmp_path, capsys):
    assert main(["validate-config", "--scenario", str(scenario_file(tmp_path))]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] and out["scenario"] == "adversarial-crossing"


def test_validate_negative_duration(tmp_path, capsys):
    rc = main(["validate-config", "--scenario", str(scenario_file(tmp_path, duration=-5))])
    err = capsys.readouterr().err.strip()
    assert rc == 2
    assert err.count("\n") == 0 and "duration" in err and err.startswith("error: ConfigError")


def test_validate_missing_file(tmp_path, capsys):
    assert main(["validate-config", "--scenario", str(tmp_path / "nope.yaml")]) == 2
    assert "scenario" in capsys.readouterr().err


def test_bad_log_level(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("PANNAV_LOG_LEVEL", "loud")
    assert main(["validate-config", "--scenario", str(scenario_file(tmp_path))]) == 2
    assert "PANNAV_LOG_LEVEL" in capsys.readouterr().err


def test_usage_error_exit_code():
    assert main(["run"]) == 2


def test_run_record_replay(tmp_path, capsys):
    scen = scenario_file(tmp_path)
    out, rec, rep = tmp_path / "run", tmp_path / "rec", tmp_path / "rep"
    assert main(["run", "--scenario", str(scen), "--seed", "7", "--out", str(out), "--record", str(rec),
                 "--export-cycles", "0,2"]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["violations"] == 0 and summary["out"] == str(out)
    for name in ("metrics.jsonl", "decisions.csv", "trajectories.csv", "tracks.csv", "timing.jsonl", "map.png", "costs.png"):
        assert (out / name).is_file(), name
    assert (out / "maps" / "cycle_0000").is_dir() and (out / "maps" / "cycle_0002" / "map.png").is_file()
    header = json.loads((out / "metrics.jsonl").read_text().splitlines()[0])
    assert header["seed"] == 7

    assert main(["replay", "--masks", str(rec / "masks"), "--clouds", str(rec / "scans"), "--out", str(rep),
                 "--no-figures"]) == 0
    capsys.readouterr()
    for name in ("metrics.jsonl", "decisions.csv", "trajectories.csv", "tracks.csv"):
        assert (out / name).read_bytes() == (rep / name).read_bytes(), name
    assert not (rep / "map.png").exists()


def test_replay_detects_divergence(tmp_path, capsys):
    scen = scenario_file(tmp_path)
    rec = tmp_path / "rec"
    assert main(["run", "--scenario", str(scen), "--out", str(tmp_path / "a"), "--record", str(rec), "--no-figures"]) == 0
    other = scenario_file(tmp_path, robot={"start": [0.5, 0.0, 0.0]})
    rc = main(["replay", "--masks", str(rec / "masks"), "--clouds", str(rec / "scans"), "--out", str(tmp_path / "b"),
               "--scenario", str(other), "--no-figures"])
    assert rc == 1 and "ReplayDivergence" in capsys.readouterr().err


def test_export_maps_requires_cycles(tmp_path, capsys):
    rc = main(["export-maps", "--scenario", str(scenario_file(tmp_path)), "--out", str(tmp_path / "o"),
               "--export-cycles", ""])
    assert rc == 2 and "export-cycles" in capsys.readouterr().err


@pytest.mark.parametrize("text", ["1,x", "-1"])
def test_export_cycles_parse_errors(tmp_path, capsys, text):
    rc = main(["run", "--scenario", str(scenario_file(tmp_path)), "--out", str(tmp_path / "o"), "--export-cycles", text])
    assert rc == 2 and "export-cycles" in capsys.readouterr().err
