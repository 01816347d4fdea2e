import json

import pytest
from click.testing import CliRunner

from dvpd import load_config
from dvpd.cli import main, worker_count
from dvpd.scenario import set_dotted


@pytest.fixture
def short_cfg(tmp_path):
    raw = load_config("dvpd20.json").raw
    raw = set_dotted(raw, "simulation.duration", 30e-6)
    raw = set_dotted(raw, "faults", [{"kind": "HS_SCF", "vr_index": 2, "t_inject": 10e-6}])
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(raw))
    return p


def test_validate_ok():
    res = CliRunner().invoke(main, ["validate", "--config", "dvpd20.json"])
    assert res.exit_code == 0
    assert "20 VRs" in res.output


def test_validate_bad_config_exits_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"schema_version": 1, "emulator": {"K": 7}}))
    res = CliRunner().invoke(main, ["validate", "--config", str(p)])
    assert res.exit_code == 2
    assert "emulator.K" in res.output


def test_run_then_report_agree(tmp_path, short_cfg):
    runner = CliRunner()
    out = tmp_path / "out"
    res = runner.invoke(main, ["run", "--config", str(short_cfg), "--out", str(out)])
    assert res.exit_code == 0, res.output
    original = json.loads((out / "report.json").read_text())
    assert original["detection_latency_us"]["2"] > 0
    res = runner.invoke(main, ["report", "--trace", str(out / "trace.csv"), "--config", str(short_cfg),
                               "--out", str(tmp_path / "again.json")])
    assert res.exit_code == 0, res.output
    again = json.loads((tmp_path / "again.json").read_text())
    assert again["detection_latency_us"] == pytest.approx(original["detection_latency_us"])
    assert again["false_positive_count"] == original["false_positive_count"]


def test_run_divergence_exits_3_with_partial_trace(tmp_path):
    raw = load_config("dvpd20.json").raw
    for k, v in {"simulation.duration": 0.2e-3, "simulation.blowup_factor": 1.05, "fuses.isolation": False,
                 "faults": [{"kind": "HS_SCF", "vr_index": 0, "t_inject": 10e-6}]}.items():
        raw = set_dotted(raw, k, v)
    p = tmp_path / "div.json"
    p.write_text(json.dumps(raw))
    res = CliRunner().invoke(main, ["run", "--config", str(p), "--out", str(tmp_path / "o")])
    assert res.exit_code == 3
    assert (tmp_path / "o" / "trace.csv").stat().st_size > 0
    assert not (tmp_path / "o" / "report.json").exists()


def test_sweep_small_grid(tmp_path, short_cfg):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"detector.threshold_fraction": [0.05, 0.1], "emulator.K": [10, 7]}))
    res = CliRunner().invoke(main, ["sweep", "--config", str(short_cfg), "--grid", str(grid),
                                    "--out", str(tmp_path / "sw")])
    assert res.exit_code == 0, res.output
    rows = json.loads((tmp_path / "sw" / "sweep.json").read_text())
    assert len(rows) == 4
    assert sorted(r["status"] for r in rows) == ["invalid", "invalid", "ok", "ok"]


def test_worker_cap(monkeypatch):
    monkeypatch.setenv("DVPD_SIM_THREADS", "2")
    assert worker_count(8) == 2
    monkeypatch.delenv("DVPD_SIM_THREADS")
    assert worker_count(3) == 3
