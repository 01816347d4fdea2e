import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dvpd import (ConfigError, EfficiencySeries, SummaryReport, degradation_rate, efficiency,
                  energy_closure, latency_budget_check)

from .oracles import least_squares_slope

PERIOD = 1e-6


class _Trace:
    """Minimal trace with uniform rows every 50 ns."""

    def __init__(self, p_in, p_load, p_diss=None, e_stored=None, n_vr=2):
        n = len(p_load)
        self.t = np.arange(n) * 50e-9
        self.period = PERIOD
        per_vr = np.repeat(np.asarray(p_in, float)[:, None] / n_vr, n_vr, axis=1)
        diss = np.zeros_like(per_vr) if p_diss is None else np.repeat(np.asarray(p_diss)[:, None] / n_vr, n_vr, 1)
        self.vr = {"p_in": per_vr, "p_diss": diss}
        self.sys = {"p_load": np.asarray(p_load, float),
                    "e_stored": np.zeros(n) if e_stored is None else np.asarray(e_stored, float)}


def _series(eta, dt=1e-6, window=1e-6):
    t = np.arange(len(eta)) * dt
    return EfficiencySeries(t=t, eta=np.asarray(eta, float), window=window, p_in=None, p_load=None)


def test_lossless_trace_has_unit_efficiency():
    p = np.full(1000, 400.0)
    p[0] = 0.0
    s = efficiency(_Trace(p, p), 10e-6)
    assert np.all(s.eta[np.isfinite(s.eta)] == 1.0)
    assert np.isnan(s.eta[:200]).all() and np.isfinite(s.eta[200:]).all()


def test_efficiency_is_ratio_of_window_energies():
    # window of 4 rows, hand-summed energies
    p_in = np.array([0, 10, 10, 20, 20, 10, 10, 10], float)
    p_ld = np.array([0, 9, 8, 18, 16, 9, 8, 9], float)
    tr = _Trace(p_in, p_ld)
    tr.period = 50e-9
    s = efficiency(tr, 200e-9)
    assert s.eta[4] == pytest.approx((9 + 8 + 18 + 16) / 60)
    assert s.eta[7] == pytest.approx((16 + 9 + 8 + 9) / 50)


def test_efficiency_undefined_without_input_power():
    p = np.zeros(500)
    s = efficiency(_Trace(p, p), 5e-6)
    assert np.isnan(s.eta).all()


def test_efficiency_rejects_short_window():
    p = np.ones(100)
    with pytest.raises(ConfigError, match="window"):
        efficiency(_Trace(p, p), 1.5 * PERIOD)


def test_degradation_rate_of_constructed_line():
    # eta = 85 - 0.5 * t_us percent has slope -0.5 %/us
    t_us = np.arange(200.0)
    s = _series((85.0 - 0.5 * (t_us - 50.0)) / 100.0)
    assert degradation_rate(s, 50e-6, 50e-6) == pytest.approx(0.5, rel=1e-12)


def test_degradation_rate_flat_is_zero():
    assert degradation_rate(_series(np.full(200, 0.85)), 10e-6, 50e-6) == pytest.approx(0.0, abs=1e-12)


@given(a=st.floats(0.5, 0.95), b=st.floats(-0.02, 0.02), t0=st.integers(0, 100))
def test_degradation_rate_exact_on_affine(a, b, t0):
    t_us = np.arange(300.0)
    s = _series(a + b * t_us / 100.0)
    # slope in percent per us is 100 * b / 100 = b
    assert degradation_rate(s, t0 * 1e-6, 80e-6) == pytest.approx(-b, rel=1e-9, abs=1e-12)


def test_degradation_rate_matches_least_squares_oracle():
    rng = np.random.default_rng(7)
    eta = 0.85 - 0.003 * np.arange(300) + rng.normal(0.0, 1e-3, 300)
    s = _series(eta)
    sel = slice(20, 91)
    ref = -least_squares_slope(s.t[sel] * 1e6, 100 * eta[sel])
    assert degradation_rate(s, 20e-6, 70e-6) == pytest.approx(ref, rel=1e-9)


def test_degradation_rate_rejects_short_span_and_missing_coverage():
    s = _series(np.full(100, 0.85), window=10e-6)
    with pytest.raises(ConfigError, match="span"):
        degradation_rate(s, 0.0, 40e-6)
    with pytest.raises(ConfigError, match="cover"):
        degradation_rate(s, 60e-6, 50e-6)


def test_energy_closure_of_consistent_trace():
    n = 101
    p_in = np.full(n, 100.0)
    p_ld = np.full(n, 80.0)
    p_ds = np.full(n, 15.0)
    p_in[0] = p_ld[0] = p_ds[0] = 0.0
    # 5 W into storage for 100 rows of 50 ns
    e_st = np.linspace(0.0, 5.0 * 100 * 50e-9, n)
    assert energy_closure(_Trace(p_in, p_ld, p_ds, e_st)) == pytest.approx(0.0, abs=1e-12)
    assert energy_closure(_Trace(p_in, p_ld, p_ds)) == pytest.approx(0.05, rel=1e-9)


def _report(kind, lat_us, trip_us=0.1):
    return SummaryReport(None, None, trip_delay_us=trip_us,
                         faults=[{"kind": kind, "detection_latency_us": lat_us}])


def test_budget_hs_scf_sub_microsecond_latency_passes():
    # 0.3 us detection plus 0.1 us fuse against the 10 us budget
    assert latency_budget_check(_report("HS_SCF", 0.3)).passed == {"HS_SCF": True}


def test_budget_ls_scf_14us_latency_passes():
    # 14 us detection plus 0.1 us fuse against the 31 us budget
    assert latency_budget_check(_report("LS_SCF", 14.0)).passed == {"LS_SCF": True}


def test_budget_violation_enumerated():
    chk = latency_budget_check(_report("HS_SCF", 12.0))
    assert chk.passed == {"HS_SCF": False}
    assert chk.violations == ["HS_SCF"]


def test_budget_undetected_fault_fails():
    assert latency_budget_check(_report("LS_SCF", None)).violations == ["LS_SCF"]


def test_budget_ignores_kinds_without_budget():
    assert latency_budget_check(_report("LS_OCF", 100.0)).passed == {}
