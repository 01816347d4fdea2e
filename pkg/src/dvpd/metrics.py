"""Efficiency, degradation rate, latency budgets and energy accounting.

All functions read a ``WaveformTrace``. Power columns in a trace are
averages over the interval that ends at each row (the ``t = 0`` row holds
zeros), so summing ``p * row_dt`` recovers the integrated energies exactly.
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from ._validate import ConfigError, positive

# detection + fuse actuation must finish inside these windows (s)
LATENCY_BUDGET = {"HS_SCF": 10e-6, "LS_SCF": 31e-6}


@dataclass
class EfficiencySeries:
    """Trailing-window efficiency; ``eta`` is NaN where undefined."""
    t: np.ndarray
    eta: np.ndarray
    window: float
    p_in: np.ndarray
    p_load: np.ndarray

    def at(self, t):
        """Efficiency of the window ending at the last row <= ``t``."""
        i = int(np.searchsorted(self.t, t * (1 + 1e-12), side="right")) - 1
        if i < 0:
            raise ConfigError("t", "before the start of the series")
        return float(self.eta[i])


@dataclass
class SummaryReport:
    """Per-scenario results. Times are in microseconds, efficiencies in percent."""
    baseline_efficiency_pct: float | None
    final_efficiency_pct: float | None
    degradation_rate_pct_per_us: dict = field(default_factory=dict)
    detection_latency_us: dict = field(default_factory=dict)
    isolation_time_us: dict = field(default_factory=dict)
    post_isolation_efficiency_pct: float | None = None
    false_positive_count: int = 0
    energy_closure_error: float = 0.0
    v_plane_min: float = float("nan")
    v_plane_max: float = float("nan")
    trip_delay_us: float = 0.0
    faults: list = field(default_factory=list)
    status: str = "ok"

    def to_dict(self):
        return asdict(self)


@dataclass
class BudgetCheck:
    passed: dict
    violations: list


def _row_dt(trace):
    if len(trace.t) < 2:
        raise ConfigError("trace", "needs at least two rows")
    return float(trace.t[1] - trace.t[0])


def efficiency(trace, window):
    """Trailing-window efficiency sum(E_load) / sum(E_in).

    Args:
        trace: Waveform trace with per-VR ``p_in`` and system ``p_load``.
        window: Averaging window (s), at least two switching periods.

    Returns:
        An ``EfficiencySeries`` on the trace's time grid.
    """
    positive("window", window)
    if window < 2.0 * trace.period * (1 - 1e-9):
        raise ConfigError("window", "must cover at least two switching periods")
    h = _row_dt(trace)
    w = max(int(round(window / h)), 1)
    p_in = trace.vr["p_in"].sum(axis=1)
    p_load = trace.sys["p_load"]
    c_in = np.concatenate([[0.0], np.cumsum(p_in)])
    c_ld = np.concatenate([[0.0], np.cumsum(p_load)])
    eta = np.full(len(p_in), np.nan)
    if len(p_in) > w:
        e_in = c_in[w + 1:] - c_in[1:-w]
        e_ld = c_ld[w + 1:] - c_ld[1:-w]
        with np.errstate(divide="ignore", invalid="ignore"):
            eta[w:] = np.where(e_in > 0.0, e_ld / e_in, np.nan)
    return EfficiencySeries(t=np.asarray(trace.t), eta=eta, window=w * h, p_in=p_in, p_load=p_load)


def degradation_rate(series, t_inject, span):
    """Least-squares efficiency slope after ``t_inject``, negated.

    Returns:
        Degradation in percentage points per microsecond (positive when
        efficiency falls).
    """
    positive("span", span)
    if span < 5.0 * series.window * (1 - 1e-9):
        raise ConfigError("span", "must cover at least five efficiency windows")
    tol = 1e-9 * max(span, abs(t_inject))
    if series.t[0] > t_inject + tol or series.t[-1] < t_inject + span - tol:
        raise ConfigError("span", "series does not cover [t_inject, t_inject + span]")
    sel = (series.t >= t_inject - tol) & (series.t <= t_inject + span + tol) & np.isfinite(series.eta)
    if np.count_nonzero(sel) < 2:
        raise ConfigError("span", "fewer than two defined efficiency points in the span")
    t_us = (series.t[sel] - t_inject) * 1e6
    slope = np.polyfit(t_us, 100.0 * series.eta[sel], 1)[0]
    return float(-slope)


def energy_closure(trace):
    """Relative residual of E_in - E_load - E_diss - dE_stored over the run."""
    h = _row_dt(trace)
    e_in = h * float(np.sum(trace.vr["p_in"]))
    e_load = h * float(np.sum(trace.sys["p_load"]))
    e_diss = h * float(np.sum(trace.vr["p_diss"]))
    d_store = float(trace.sys["e_stored"][-1] - trace.sys["e_stored"][0])
    if e_in <= 0.0:
        raise ConfigError("trace", "no input energy to close against")
    return abs(e_in - e_load - e_diss - d_store) / e_in


def latency_budget_check(report):
    """Check detection plus fuse delay against the per-kind budgets.

    Only kinds with a budget are checked. An undetected or falsely
    flagged fault counts as a violation.
    """
    passed = {}
    for f in report.faults:
        budget = LATENCY_BUDGET.get(f["kind"])
        if budget is None:
            continue
        lat = f.get("detection_latency_us")
        ok = lat is not None and (lat + report.trip_delay_us) * 1e-6 < budget
        key = f["kind"]
        passed[key] = passed.get(key, True) and ok
    return BudgetCheck(passed=passed, violations=sorted(k for k, v in passed.items() if not v))


def summarize(trace, faults, window, span, trip_delay):
    """Build a ``SummaryReport`` from a trace and the faults injected into it."""
    series = efficiency(trace, window)
    defined = np.isfinite(series.eta)
    t_first = min((f.t_inject for f in faults), default=None)

    def _pct(v):
        return None if v is None or not np.isfinite(v) else 100.0 * float(v)

    if t_first is None:
        base = series.eta[defined][-1] if defined.any() else None
    else:
        pre = defined & (series.t <= t_first)
        base = series.eta[pre][-1] if pre.any() else None
    final = series.eta[defined][-1] if defined.any() else None

    rep = SummaryReport(
        baseline_efficiency_pct=_pct(base),
        final_efficiency_pct=_pct(final),
        energy_closure_error=energy_closure(trace),
        v_plane_min=float(np.min(trace.sys["v_plane"])),
        v_plane_max=float(np.max(trace.sys["v_plane"])),
        trip_delay_us=trip_delay * 1e6,
        status=trace.status,
    )
    faulted = {f.vr_index: f for f in faults}
    for k, t_flag in enumerate(trace.t_flag):
        f = faulted.get(k)
        if not np.isnan(t_flag) and (f is None or t_flag < f.t_inject):
            rep.false_positive_count += 1
    for f in faults:
        key = str(f.vr_index)
        t_flag = trace.t_flag[f.vr_index]
        t_open = trace.t_open[f.vr_index]
        lat = None if np.isnan(t_flag) or t_flag < f.t_inject else (t_flag - f.t_inject) * 1e6
        iso = None if np.isnan(t_open) else (t_open - f.t_inject) * 1e6
        rep.detection_latency_us[key] = lat
        rep.isolation_time_us[key] = iso
        try:
            rep.degradation_rate_pct_per_us[key] = degradation_rate(series, f.t_inject, span)
        except ConfigError:
            rep.degradation_rate_pct_per_us[key] = None
        rep.faults.append({
            "vr_index": f.vr_index, "kind": f.kind.name, "t_inject_us": f.t_inject * 1e6,
            "detection_latency_us": lat, "isolation_time_us": iso,
        })
    if np.any(~np.isnan(trace.t_open)):
        rep.post_isolation_efficiency_pct = _pct(final)
    return rep
