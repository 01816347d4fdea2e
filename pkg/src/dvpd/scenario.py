"""Scenario configuration, execution and trace/report export.

A scenario is a JSON document. Every section is optional except
``schema_version``; missing entries take the defaults of the corresponding
dataclass. Unknown keys are rejected so typos cannot silently fall back to
defaults. See ``docs/config.md`` for the full schema.
"""

import copy
import csv
import json
import math
import os
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import numpy as np

from . import _kernel as K
from ._validate import ConfigError, integer, nonnegative, positive
from .converter import ControllerParams, ConverterParams
from .detector import DetectorConfig
from .emulator import EmulatorConfig
from .faults import FaultSpec
from .metrics import efficiency, summarize
from .pdn import (LoadProfile, LogBuffer, PlaneModel, SimulationDiverged, SupplyProfile,
                  advance, build_model, initial_state)

SCHEMA_VERSION = 1
SCF_MODELS = ("interlock", "shoot_through")

VR_COLUMNS = {
    "i_L": K.C_IL, "i_L_est": K.C_EST, "epsilon": K.C_EPS, "tau": K.C_TAU, "flag": K.C_FLAG,
    "duty": K.C_DUTY, "v_c": K.C_VC, "fuse_in": K.C_FUSE_IN, "fuse_out": K.C_FUSE_OUT,
    "p_in": K.C_PIN, "p_diss": K.C_PDISS, "i_link": K.C_ILINK,
}
SYS_COLUMNS = {
    "v_plane": K.Y_VP, "i_load": K.Y_ILOAD, "v_in": K.Y_VIN, "p_load": K.Y_PLOAD,
    "e_stored": K.Y_ESTORED, "i_load_avg": K.Y_IAVG,
}


@dataclass(frozen=True)
class SimulationOptions:
    duration: float = 1e-3           # s
    dt: float = 5e-9                 # s; must divide the switching period
    scf_model: str = "interlock"
    sensor_noise_std: float = 0.0    # A
    seed: int = 0
    blowup_factor: float = 1e3

    def __post_init__(self):
        positive("simulation.duration", self.duration)
        positive("simulation.dt", self.dt)
        if self.scf_model not in SCF_MODELS:
            raise ConfigError("simulation.scf_model", f"must be one of {SCF_MODELS}")
        nonnegative("simulation.sensor_noise_std", self.sensor_noise_std)
        integer("simulation.seed", self.seed, minimum=0)
        positive("simulation.blowup_factor", self.blowup_factor)


@dataclass(frozen=True)
class FuseOptions:
    trip_delay: float = 100e-9  # s
    isolation: bool = True

    def __post_init__(self):
        nonnegative("fuses.trip_delay", self.trip_delay)
        if not isinstance(self.isolation, bool):
            raise ConfigError("fuses.isolation", "must be true or false")


@dataclass(frozen=True)
class OutputOptions:
    decimation: int = 10
    efficiency_window: float = 10e-6   # s
    degradation_span: float = 50e-6    # s

    def __post_init__(self):
        integer("output.decimation", self.decimation, minimum=1)
        positive("output.efficiency_window", self.efficiency_window)
        positive("output.degradation_span", self.degradation_span)


@dataclass(frozen=True)
class SystemConfig:
    """Validated scenario. Build one with :func:`load_config`."""
    vr_count: int = 20
    converter: ConverterParams = field(default_factory=ConverterParams)
    controller: ControllerParams = field(default_factory=ControllerParams)
    vr_overrides: tuple = ()   # (index, ConverterParams, ControllerParams)
    plane: PlaneModel = field(default_factory=PlaneModel)
    load: LoadProfile = field(default_factory=lambda: LoadProfile.constant(400.0))
    supply: SupplyProfile | None = None
    k_samples: int = 20
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    faults: tuple = ()
    fuses: FuseOptions = field(default_factory=FuseOptions)
    simulation: SimulationOptions = field(default_factory=SimulationOptions)
    output: OutputOptions = field(default_factory=OutputOptions)
    raw: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        integer("vr_count", self.vr_count, minimum=1)
        if self.supply is None:
            object.__setattr__(self, "supply", SupplyProfile.constant(self.converter.v_in_nominal))
        self._check_consistency()

    @property
    def steps_per_period(self):
        return int(round(self.converter.period / self.simulation.dt))

    @property
    def n_steps(self):
        return int(round(self.simulation.duration / self.simulation.dt))

    def converters(self):
        out = [self.converter] * self.vr_count
        for k, cp, _ in self.vr_overrides:
            out[k] = cp
        return out

    def controllers(self):
        out = [self.controller] * self.vr_count
        for k, _, cc in self.vr_overrides:
            out[k] = cc
        return out

    def _check_consistency(self):
        sim = self.simulation
        ratio = self.converter.period / sim.dt
        if abs(ratio - round(ratio)) > 1e-6 * ratio:
            raise ConfigError("simulation.dt", "must divide the switching period exactly")
        if ratio < 50 - 1e-9:
            raise ConfigError("simulation.dt", "must be <= 1/(50 f_sw) to resolve each conduction interval")
        if self.steps_per_period % self.k_samples:
            raise ConfigError("emulator.K", f"K={self.k_samples} does not divide {self.steps_per_period} steps per period")
        for k, _, _ in self.vr_overrides:
            if not 0 <= k < self.vr_count:
                raise ConfigError("vr_overrides", f"index {k} is outside 0..{self.vr_count - 1}")
        for cp in self.converters():
            EmulatorConfig.from_converter(cp, self.k_samples)  # stability bound
            if cp.f_sw != self.converter.f_sw:
                raise ConfigError("vr_overrides.converter.f_sw", "all VRs must share one switching frequency")
        seen = set()
        for f in self.faults:
            if f.vr_index >= self.vr_count:
                raise ConfigError("faults.vr_index", f"{f.vr_index} is outside 0..{self.vr_count - 1}")
            if f.vr_index in seen:
                raise ConfigError("faults.vr_index", f"VR {f.vr_index} has more than one fault")
            seen.add(f.vr_index)
        if self.output.efficiency_window < 2.0 * self.converter.period * (1 - 1e-9):
            raise ConfigError("output.efficiency_window", "must cover at least two switching periods")
        if self.output.degradation_span < 5.0 * self.output.efficiency_window * (1 - 1e-9):
            raise ConfigError("output.degradation_span", "must cover at least five efficiency windows")

    def model(self, noise=True):
        sim = self.simulation
        return build_model(
            self.converters(), self.controllers(), self.plane, self.load, self.supply,
            self.k_samples, self.detector, self.faults, self.fuses.trip_delay, self.fuses.isolation,
            shoot_through=sim.scf_model == "shoot_through",
            steps_per_period=self.steps_per_period,
            noise_std=sim.sensor_noise_std if noise else 0.0,
            blowup_factor=sim.blowup_factor,
        )


# ---------------------------------------------------------------- parsing

_SECTIONS = {
    "schema_version", "vr_count", "converter", "controller", "vr_overrides", "plane", "load",
    "supply", "emulator", "detector", "faults", "fuses", "simulation", "output",
}


def _keys(cls, exclude=()):
    return {f.name for f in fields(cls)} - set(exclude)


def _build(cls, data, section, exclude=()):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(section, "must be an object")
    unknown = set(data) - _keys(cls, exclude)
    if unknown:
        raise ConfigError(f"{section}.{sorted(unknown)[0]}", "unknown key")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigError(section, str(exc)) from None


def _schedule(cls, data, section, value_key, default):
    if data is None:
        return default
    if not isinstance(data, dict) or set(data) - {"times", value_key}:
        extra = sorted(set(data) - {"times", value_key}) if isinstance(data, dict) else []
        raise ConfigError(f"{section}.{extra[0]}" if extra else section, "unknown key" if extra else "must be an object")
    if "times" not in data or value_key not in data:
        raise ConfigError(section, f"needs 'times' and '{value_key}'")
    return cls(tuple(data["times"]), tuple(data[value_key]))


def config_from_dict(data):
    """Validate a parsed JSON document into a ``SystemConfig``."""
    if not isinstance(data, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = set(data) - _SECTIONS
    if unknown:
        raise ConfigError(sorted(unknown)[0], "unknown key")
    if data.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError("schema_version", f"expected {SCHEMA_VERSION}, got {data.get('schema_version')!r}")
    conv_d = data.get("converter") or {}
    ctrl_d = data.get("controller") or {}
    converter = _build(ConverterParams, conv_d, "converter")
    controller = _build(ControllerParams, ctrl_d, "controller")

    overrides = []
    raw_ov = data.get("vr_overrides") or {}
    if not isinstance(raw_ov, dict):
        raise ConfigError("vr_overrides", "must map VR index to an object")
    for key, ov in sorted(raw_ov.items(), key=lambda kv: int(kv[0]) if str(kv[0]).isdigit() else -1):
        if not str(key).isdigit():
            raise ConfigError("vr_overrides", f"key {key!r} is not a VR index")
        if not isinstance(ov, dict) or set(ov) - {"converter", "controller"}:
            raise ConfigError(f"vr_overrides.{key}", "may only contain 'converter' and 'controller'")
        cp = _build(ConverterParams, {**conv_d, **(ov.get("converter") or {})}, f"vr_overrides.{key}.converter")
        cc = _build(ControllerParams, {**ctrl_d, **(ov.get("controller") or {})}, f"vr_overrides.{key}.controller")
        overrides.append((int(key), cp, cc))

    emu = data.get("emulator") or {}
    if not isinstance(emu, dict) or set(emu) - {"K"}:
        raise ConfigError("emulator", "only 'K' is configurable; the rest follows the converter")
    k_samples = integer("emulator.K", emu.get("K", 20), minimum=2)

    faults = []
    for i, f in enumerate(data.get("faults") or []):
        faults.append(_build(FaultSpec, f, f"faults[{i}]"))

    return SystemConfig(
        vr_count=integer("vr_count", data.get("vr_count", 20), minimum=1),
        converter=converter,
        controller=controller,
        vr_overrides=tuple(overrides),
        plane=_build(PlaneModel, data.get("plane"), "plane", exclude=("v_plane",)),
        load=_schedule(LoadProfile, data.get("load"), "load", "currents", LoadProfile.constant(400.0)),
        supply=_schedule(SupplyProfile, data.get("supply"), "supply", "voltages", None),
        k_samples=k_samples,
        detector=_build(DetectorConfig, data.get("detector"), "detector"),
        faults=tuple(faults),
        fuses=_build(FuseOptions, data.get("fuses"), "fuses"),
        simulation=_build(SimulationOptions, data.get("simulation"), "simulation"),
        output=_build(OutputOptions, data.get("output"), "output"),
        raw=copy.deepcopy(data),
    )


def bundled_config_path(name):
    """Path of a config shipped with the package (``dvpd20.json`` ...)."""
    ref = resources.files("dvpd").joinpath("data", name)
    if not ref.is_file():
        raise FileNotFoundError(f"no bundled config named {name!r}")
    return Path(str(ref))


def load_config(source):
    """Load and validate a scenario.

    Args:
        source: A path, the name of a bundled config, JSON text, or an
            already-parsed dict.

    Raises:
        ConfigError: Parse or validation failure; ``field`` names the entry.
    """
    if isinstance(source, dict):
        return config_from_dict(source)
    text = None
    if isinstance(source, (str, os.PathLike)):
        s = str(source)
        if s.lstrip().startswith("{"):
            text = s
        else:
            path = Path(s)
            if not path.is_file():
                try:
                    path = bundled_config_path(s)
                except FileNotFoundError:
                    raise ConfigError("<path>", f"{s}: no such file") from None
            text = path.read_text()
    else:
        raise ConfigError("<source>", f"cannot load a config from {type(source).__name__}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"parse error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return config_from_dict(data)


def set_dotted(data, dotted, value):
    """Return a deep copy of ``data`` with ``a.b.c`` set to ``value``.

    ``emulator.K`` and friends address nested sections; sweeps use this.
    """
    out = copy.deepcopy(data)
    node = out
    parts = dotted.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(dotted, "does not address a config section")
    node[parts[-1]] = value
    return out


# ---------------------------------------------------------------- traces

@dataclass
class WaveformTrace:
    """Decimated record of a run.

    ``vr`` maps column names to ``(rows, vr_count)`` arrays and ``sys`` maps
    system column names to ``(rows,)`` arrays. Power columns are averages
    over the interval ending at each row. ``t_flag`` and ``t_open`` hold the
    exact first-flag and fuse-open times per VR (NaN when absent).
    """
    t: np.ndarray
    vr: dict
    sys: dict
    period: float
    dt: float
    decimation: int
    t_flag: np.ndarray
    t_open: np.ndarray
    status: str = "ok"

    @property
    def vr_count(self):
        return self.t_flag.shape[0]

    def columns(self):
        names = ["t", *self.sys]
        for k in range(self.vr_count):
            names += [f"{c}_{k}" for c in self.vr]
        return names

    def table(self):
        cols = [self.t, *self.sys.values()]
        for k in range(self.vr_count):
            cols += [v[:, k] for v in self.vr.values()]
        return np.column_stack(cols)


def _trace_from_log(cfg, model, state, log, status):
    n = log.filled
    vr = {name: log.vr[:n, :, c].copy() for name, c in VR_COLUMNS.items()}
    sys = {name: log.sys[:n, c].copy() for name, c in SYS_COLUMNS.items()}
    trace = WaveformTrace(
        t=log.t[:n].copy(), vr=vr, sys=sys, period=model.period, dt=model.dt,
        decimation=log.every, t_flag=state.x[:, K.X_TFLAG].copy(),
        t_open=state.x[:, K.X_TOPEN].copy(), status=status,
    )
    if n > 1:
        window = cfg.output.efficiency_window
        if window >= 2 * model.period * (1 - 1e-9):
            trace.sys["eta"] = efficiency(trace, window).eta
    if "eta" not in trace.sys:
        trace.sys["eta"] = np.full(n, np.nan)
    return trace


def _log_initial_row(log, model, state):
    x, s = state.x, state.s
    p = model.params
    log.t[0] = 0.0
    log.vr[0, :, K.C_IL] = x[:, K.X_IL]
    log.vr[0, :, K.C_EST] = x[:, K.X_EST]
    log.vr[0, :, K.C_EPS] = x[:, K.X_EPS]
    log.vr[0, :, K.C_TAU] = x[:, K.X_TAU]
    log.vr[0, :, K.C_DUTY] = x[:, K.X_DUTY]
    log.vr[0, :, K.C_VC] = x[:, K.X_VC]
    log.vr[0, :, K.C_FUSE_IN] = state.z[:, K.Z_FUSE]
    log.vr[0, :, K.C_FUSE_OUT] = state.z[:, K.Z_FUSE]
    log.sys[0, K.Y_VP] = s[K.S_VP]
    log.sys[0, K.Y_ILOAD] = model.load.at(0.0)
    log.sys[0, K.Y_VIN] = model.supply.at(0.0)
    log.sys[0, K.Y_ESTORED] = (
        0.5 * model.plane.c_plane * s[K.S_VP] ** 2
        + np.sum(0.5 * p[:, K.P_L] * x[:, K.X_IL] ** 2 + 0.5 * p[:, K.P_C] * x[:, K.X_VC] ** 2)
    )
    log.row[0] = 1


def run_scenario(cfg, full_rate=False, seedless=False):
    """Simulate a validated scenario over its full horizon.

    Args:
        cfg: ``SystemConfig``.
        full_rate: Log every integration step instead of the configured
            decimation.
        seedless: Disable sensor noise so no random numbers are drawn.

    Returns:
        ``(WaveformTrace, SummaryReport)``.

    Raises:
        SimulationDiverged: With the partial trace attached as ``.trace``.
    """
    model = cfg.model(noise=not seedless)
    if model.noise_std > 0.0:
        K.seed_rng(cfg.simulation.seed)
    state = initial_state(model, cfg.fuses.trip_delay)
    every = 1 if full_rate else cfg.output.decimation
    n_steps = cfg.n_steps
    log = LogBuffer(n_steps // every + 1, model.n_vr, every)
    _log_initial_row(log, model, state)
    ok = advance(model, state, n_steps, log)
    trace = _trace_from_log(cfg, model, state, log, "ok" if ok else "diverged")
    if not ok:
        raise SimulationDiverged(
            f"state left the blow-up bound near t={state.time:.9g} s", trace=trace
        )
    report = summarize(
        trace, cfg.faults, cfg.output.efficiency_window, cfg.output.degradation_span, cfg.fuses.trip_delay
    )
    return trace, report


def _io_error(path, exc):
    return OSError(f"{path}: {exc.strerror or exc}")


def export_trace(trace, path):
    """Write the trace as CSV with a header row."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(",".join(trace.columns()) + "\n")
            np.savetxt(fh, trace.table(), delimiter=",", fmt="%.12g")
    except OSError as exc:
        raise _io_error(path, exc) from exc
    return path


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def export_report(report, path):
    """Write the summary report as JSON."""
    path = Path(path)
    try:
        with open(path, "w") as fh:
            json.dump(_jsonable(report.to_dict()), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise _io_error(path, exc) from exc
    return path


def read_trace(path, cfg):
    """Parse a CSV written by :func:`export_trace` back into a trace.

    Flag and fuse-open times are recovered from the first row in which they
    appear, which is exact when the decimation divides the sample stride
    and the fuse delay.
    """
    path = Path(path)
    try:
        with open(path, newline="") as fh:
            header = next(csv.reader(fh))
        table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, StopIteration) as exc:
        raise OSError(f"{path}: cannot read trace ({exc})") from exc
    col = {name: i for i, name in enumerate(header)}
    n = cfg.vr_count
    missing = [c for c in ("t", *SYS_COLUMNS) if c not in col]
    missing += [f"{c}_{k}" for c in VR_COLUMNS for k in range(n) if f"{c}_{k}" not in col]
    if missing:
        raise ConfigError("trace", f"{path}: missing column {missing[0]}")
    t = table[:, col["t"]]
    vr = {c: np.column_stack([table[:, col[f"{c}_{k}"]] for k in range(n)]) for c in VR_COLUMNS}
    sys = {c: table[:, col[c]] for c in SYS_COLUMNS}
    if "eta" in col:
        sys["eta"] = table[:, col["eta"]]

    def first(mask):
        out = np.full(n, np.nan)
        for k in range(n):
            idx = np.flatnonzero(mask[:, k])
            if idx.size:
                out[k] = t[idx[0]]
        return out

    dt = cfg.simulation.dt
    dec = int(round((t[1] - t[0]) / dt)) if len(t) > 1 else 1
    return WaveformTrace(
        t=t, vr=vr, sys=sys, period=cfg.converter.period, dt=dt, decimation=dec,
        t_flag=first(vr["flag"] > 0.5), t_open=first(vr["fuse_in"] >= K.FUSE_OPEN),
    )
