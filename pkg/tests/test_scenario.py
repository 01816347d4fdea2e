import json

import numpy as np
import pytest

from dvpd import (ConfigError, SimulationDiverged, export_report, export_trace, load_config,
                  read_trace, run_scenario)
from dvpd.scenario import set_dotted


@pytest.fixture(scope="module")
def base():
    return load_config("dvpd20.json").raw


def _cfg(raw, **dotted):
    for k, v in dotted.items():
        raw = set_dotted(raw, k.replace("__", "."), v)
    return load_config(raw)


# ---------------------------------------------------------------- loading

def test_bundled_reference_config():
    # 20 buck regulators stepping 6 V down to 1 V at 1 MHz, 400 W
    cfg = load_config("dvpd20.json")
    assert cfg.vr_count == 20
    assert cfg.converter.v_in_nominal == 6.0 and cfg.converter.v_out_ref == 1.0
    assert cfg.converter.f_sw == 1e6
    assert cfg.load.total == 400.0
    assert cfg.faults == ()


def test_single_vr_reference_config():
    cfg = load_config("single_vr.json")
    assert cfg.vr_count == 1 and cfg.load.total == 20.0


def test_k_divisibility(base):
    assert _cfg(base, emulator__K=10).k_samples == 10
    with pytest.raises(ConfigError) as exc:
        _cfg(base, emulator__K=7)
    assert exc.value.field == "emulator.K"


@pytest.mark.parametrize("path, value, field", [
    ("converter.L", -1e-6, "converter.L"),
    ("controller.d_max", 1.5, "controller.d_max"),
    ("detector.n_persist", 0, "detector.n_persist"),
    ("plane.r_link", 0.0, "plane.r_link"),
    ("simulation.dt", 3e-9, "simulation.dt"),
    ("simulation.dt", 25e-9, "simulation.dt"),
    ("simulation.scf_model", "magic", "simulation.scf_model"),
    ("faults", [{"kind": "HS_SCF", "vr_index": 20, "t_inject": 0.0}], "faults.vr_index"),
    ("output.degradation_span", 20e-6, "output.degradation_span"),
])
def test_validation_names_the_field(base, path, value, field):
    with pytest.raises(ConfigError) as exc:
        load_config(set_dotted(base, path, value))
    assert exc.value.field == field


@pytest.mark.parametrize("path", ["bogus", "converter.bogus", "simulation.typo"])
def test_unknown_keys_rejected(base, path):
    with pytest.raises(ConfigError, match="unknown key") as exc:
        load_config(set_dotted(base, path, 1))
    assert exc.value.field.endswith(path.split(".")[-1])


def test_schema_version_required(base):
    bad = dict(base)
    del bad["schema_version"]
    with pytest.raises(ConfigError, match="schema_version"):
        load_config(bad)


def test_parse_error_and_missing_file():
    with pytest.raises(ConfigError, match="parse error"):
        load_config("{not json")
    with pytest.raises(ConfigError, match="no such file"):
        load_config("/nonexistent/dvpd.json")


def test_minimal_document_takes_defaults():
    cfg = load_config('{"schema_version": 1}')
    assert cfg.vr_count == 20 and cfg.k_samples == 20
    assert cfg.supply.values == (cfg.converter.v_in_nominal,)


def test_load_from_path(tmp_path, base):
    p = tmp_path / "c.json"
    p.write_text(json.dumps(base))
    assert load_config(p) == load_config(base)


def test_vr_overrides(base):
    cfg = _cfg(base, vr_overrides={"3": {"converter": {"r_hs": 7e-3}}})
    cps = cfg.converters()
    assert cps[3].r_hs == 7e-3 and cps[2].r_hs == cfg.converter.r_hs
    with pytest.raises(ConfigError, match="vr_overrides"):
        _cfg(base, vr_overrides={"30": {}})


# ---------------------------------------------------------------- running

@pytest.fixture(scope="module")
def healthy(base):
    return run_scenario(_cfg(base, simulation__duration=0.1e-3))


@pytest.fixture(scope="module")
def faulted(base):
    cfg = _cfg(base, simulation__duration=0.1e-3,
               faults=[{"kind": "HS_SCF", "vr_index": 4, "t_inject": 50e-6}])
    return cfg, run_scenario(cfg)


def test_healthy_run_no_flags_and_baseline(healthy):
    trace, rep = healthy
    assert rep.false_positive_count == 0
    assert np.all(trace.vr["flag"] == 0)
    eta = trace.sys["eta"][np.isfinite(trace.sys["eta"])]
    assert np.all((eta > 0.83) & (eta < 0.87))
    assert np.all(eta <= 1.0 + 1e-6)
    assert rep.energy_closure_error < 1e-9


def test_trace_schema(healthy, faulted):
    trace, _ = healthy
    cols = trace.columns()
    assert cols[0] == "t" and "i_L_est_19" in cols and "eta" in cols
    assert np.all(np.diff(trace.t) > 0)
    assert faulted[1][0].columns() == cols  # independent of fault outcomes


def test_report_lists_faulted_vr(faulted):
    _, (trace, rep) = faulted
    assert set(rep.detection_latency_us) == {"4"}
    assert rep.detection_latency_us["4"] > 0
    assert rep.isolation_time_us["4"] == pytest.approx(rep.detection_latency_us["4"] + 0.1, abs=1e-6)


def test_export_roundtrip(tmp_path, faulted):
    cfg, (trace, rep) = faulted
    p = export_trace(trace, tmp_path / "trace.csv")
    back = read_trace(p, cfg)
    assert len(back.t) == len(trace.t)
    assert back.columns() == trace.columns()
    np.testing.assert_allclose(back.vr["i_L"], trace.vr["i_L"], rtol=1e-11)
    # the decimation equals the sample stride, so flag times survive exactly
    np.testing.assert_allclose(back.t_flag, trace.t_flag, rtol=1e-11)
    np.testing.assert_allclose(back.t_open, trace.t_open, rtol=1e-11)
    r = json.loads(export_report(rep, tmp_path / "r.json").read_text())
    assert "detection_latency_us" in r and "4" in r["detection_latency_us"]


def test_exports_byte_identical(tmp_path, base):
    cfg = _cfg(base, simulation__duration=40e-6, faults=[{"kind": "LS_SCF", "vr_index": 0, "t_inject": 5e-6}])
    files = []
    for k in range(2):
        tr, rep = run_scenario(cfg)
        files.append((export_trace(tr, tmp_path / f"t{k}.csv").read_bytes(),
                      export_report(rep, tmp_path / f"r{k}.json").read_bytes()))
    assert files[0] == files[1]


def test_row_count_for_five_ms():
    # 5 ms / 5 ns = 1e6 steps; every 10th plus the t = 0 row
    cfg = _cfg(load_config("single_vr.json").raw, simulation__duration=5e-3)
    trace, _ = run_scenario(cfg)
    assert len(trace.t) == 100_001
    assert trace.t[-1] == pytest.approx(5e-3)


def test_full_rate_logs_every_step(base):
    cfg = _cfg(base, simulation__duration=2e-6)
    trace, _ = run_scenario(cfg, full_rate=True)
    assert len(trace.t) == 401


def test_divergence_flushes_partial_trace(base):
    cfg = _cfg(base, simulation__duration=0.2e-3, simulation__blowup_factor=1.05, fuses__isolation=False,
               faults=[{"kind": "HS_SCF", "vr_index": 0, "t_inject": 10e-6}])
    with pytest.raises(SimulationDiverged) as exc:
        run_scenario(cfg)
    tr = exc.value.trace
    assert tr is not None and tr.status == "diverged"
    assert 1 < len(tr.t) < cfg.n_steps // 10 + 1


def test_sensor_noise_is_seeded_and_seedless_disables_it(base):
    cfg = _cfg(base, simulation__duration=10e-6, simulation__sensor_noise_std=0.05, simulation__seed=3)
    a, _ = run_scenario(cfg)
    b, _ = run_scenario(cfg)
    c, _ = run_scenario(cfg, seedless=True)
    clean, _ = run_scenario(_cfg(base, simulation__duration=10e-6))
    assert np.array_equal(a.vr["epsilon"], b.vr["epsilon"], equal_nan=True)
    assert not np.array_equal(a.vr["epsilon"], c.vr["epsilon"], equal_nan=True)
    assert np.array_equal(c.vr["epsilon"], clean.vr["epsilon"], equal_nan=True)


def test_warm_up_rows_are_undefined(healthy):
    trace, _ = healthy
    warm = trace.t < trace.period - 1e-12
    assert np.isnan(trace.vr["i_L_est"][warm]).all()
    assert np.isnan(trace.vr["epsilon"][warm]).all()
    assert np.isfinite(trace.vr["i_L_est"][~warm]).all()
