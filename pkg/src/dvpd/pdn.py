"""Shared power plane with N parallel regulators, advanced in lockstep.

Each regulator drives its own output capacitor, which connects to a single
capacitive plane node through a link resistance. The aggregate load is one
current sink on the plane. :func:`advance` runs the compiled kernel; every
step it applies fault overlays, integrates power stages, output capacitors
and the plane together, samples the emulator and detector on the K x f_sw
grid, runs the controllers at period boundaries and finally processes fuses.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as K
from ._validate import ConfigError, finite, integer, nonnegative, positive
from .converter import ConverterState
from .detector import DetectorState
from .faults import FuseState, FuseStatus


class SimulationDiverged(RuntimeError):
    """A state left the configured blow-up bound."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


@dataclass(frozen=True)
class PlaneModel:
    c_plane: float = 6e-3    # F
    r_link: float = 0.5e-3   # ohm per VR
    v_plane: float = 1.0     # V, used by the standalone plane_step

    def __post_init__(self):
        positive("plane.c_plane", self.c_plane)
        nonnegative("plane.r_link", self.r_link)
        if self.r_link == 0.0:
            raise ConfigError("plane.r_link", "a direct tie (0 ohm) is not supported; use a small positive value")
        finite("plane.v_plane", self.v_plane)


@dataclass(frozen=True)
class PiecewiseLinear:
    """Right-continuous piecewise-linear schedule; a repeated time is a jump."""
    times: tuple
    values: tuple
    name: str = "schedule"

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ConfigError(f"{self.name}.times", "times and values must be equal-length, non-empty lists")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ConfigError(f"{self.name}.values", "entries must be finite")
        if np.any(np.diff(t) < 0):
            raise ConfigError(f"{self.name}.times", "must be sorted")
        object.__setattr__(self, "times", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    @classmethod
    def constant(cls, value, **kw):
        return cls((0.0,), (float(value),), **kw)

    def arrays(self):
        return np.asarray(self.times), np.asarray(self.values)

    def at(self, t):
        return float(K.pwl_eval(*self.arrays(), float(t)))


@dataclass(frozen=True)
class LoadProfile(PiecewiseLinear):
    name: str = "load"

    def __post_init__(self):
        super().__post_init__()
        if min(self.values) < 0.0:
            raise ConfigError("load.currents", "load current must be >= 0")

    @property
    def total(self):
        """Peak aggregate load (A)."""
        return max(self.values)


@dataclass(frozen=True)
class SupplyProfile(PiecewiseLinear):
    name: str = "supply"

    def __post_init__(self):
        super().__post_init__()
        if min(self.values) <= 0.0:
            raise ConfigError("supply.voltages", "input voltage must be > 0")


def plane_step(plane, vr_outputs, i_load, dt):
    """Advance the plane node alone, holding the VR output voltages fixed.

    Trapezoidal in the plane voltage, so the charge balance
    ``sum(i_k) - i_load = c_plane * dv / dt`` holds exactly with the
    returned midpoint link currents.

    Args:
        plane: Plane model; ``plane.v_plane`` is the starting voltage.
        vr_outputs: Sequence of ``(v_c, connected)`` pairs.
        i_load: Load current over the step (A).
        dt: Step length (s).

    Returns:
        ``(v_plane_new, currents)`` with one injected current per VR.
    """
    positive("dt", dt)
    g = 1.0 / plane.r_link
    vc = np.array([v for v, _ in vr_outputs], dtype=float)
    conn = np.array([bool(c) for _, c in vr_outputs], dtype=bool)
    gk = np.where(conn, g, 0.0)
    a = 2.0 * plane.c_plane / dt
    v_mid = (a * plane.v_plane + np.sum(gk * vc) - i_load) / (a + np.sum(gk))
    currents = np.where(conn, gk * (vc - v_mid), 0.0)
    return 2.0 * v_mid - plane.v_plane, currents


@dataclass
class SystemModel:
    """Flat arrays describing one configured system, ready for the kernel."""
    params: np.ndarray
    dt: float
    steps_per_period: int
    k_samples: int
    plane: PlaneModel
    load: LoadProfile
    supply: SupplyProfile
    fault_kind: np.ndarray
    fault_step: np.ndarray
    threshold_fraction: float
    tau_floor: float
    n_persist: int
    isolation: bool
    trip_steps: int
    shoot_through: bool = False
    noise_std: float = 0.0
    blowup_i: float = 1e5
    blowup_v: float = 6e3

    @property
    def n_vr(self):
        return self.params.shape[0]

    @property
    def period(self):
        return self.dt * self.steps_per_period


def build_model(converters, controllers, plane, load, supply, k_samples, detector,
                faults=(), trip_delay=100e-9, isolation=True, shoot_through=False,
                steps_per_period=200, noise_std=0.0, blowup_factor=1e3):
    """Pack per-VR parameters and scenario settings into a ``SystemModel``.

    Args:
        converters: One ``ConverterParams`` per VR.
        controllers: One ``ControllerParams`` per VR.
        plane: Plane model.
        load: Aggregate load schedule.
        supply: Input voltage schedule.
        k_samples: Emulator samples per period; must divide ``steps_per_period``.
        detector: ``DetectorConfig``.
        faults: ``FaultSpec`` list, at most one per VR.
        trip_delay: Fuse actuation delay (s).
        isolation: Whether a flag trips the fuses.
        shoot_through: SCF overlay lets the complementary switch conduct.
        steps_per_period: Integration steps per switching period.
        noise_std: Std of additive current-sensor noise (A).
        blowup_factor: Divergence bound as a multiple of nominal values.
    """
    n = len(converters)
    integer("vr_count", n, minimum=1)
    if len(controllers) != n:
        raise ConfigError("controller", "need one controller per VR")
    integer("simulation.steps_per_period", steps_per_period, minimum=2)
    integer("emulator.K", k_samples, minimum=2)
    if steps_per_period % k_samples:
        raise ConfigError("emulator.K", f"K={k_samples} does not divide {steps_per_period} steps per period")
    f_sw = converters[0].f_sw
    if any(cp.f_sw != f_sw for cp in converters):
        raise ConfigError("converter.f_sw", "all VRs must share one switching frequency")
    dt = 1.0 / (f_sw * steps_per_period)
    p = np.zeros((n, K.N_PARAM))
    for k, (cp, cc) in enumerate(zip(converters, controllers)):
        p[k, K.P_L] = cp.L
        p[k, K.P_C] = cp.C_out
        p[k, K.P_RL] = cp.r_L
        p[k, K.P_RHS] = cp.r_hs
        p[k, K.P_RLS] = cp.r_ls
        p[k, K.P_VD] = cp.v_body_diode
        p[k, K.P_DROOP] = cp.droop_r
        p[k, K.P_VREF] = cp.v_out_ref
        p[k, K.P_KP] = cc.kp
        p[k, K.P_KI] = cc.ki
        p[k, K.P_KC] = cc.kc
        p[k, K.P_DMIN] = cc.d_min
        p[k, K.P_DMAX] = cc.d_max
    kind = np.full(n, K.NO_FAULT, dtype=np.int64)
    step = np.zeros(n, dtype=np.int64)
    for fs in faults:
        if fs.vr_index >= n:
            raise ConfigError("faults.vr_index", f"{fs.vr_index} is outside 0..{n - 1}")
        if kind[fs.vr_index] != K.NO_FAULT:
            raise ConfigError("faults.vr_index", f"VR {fs.vr_index} has more than one fault")
        kind[fs.vr_index] = int(fs.kind)
        step[fs.vr_index] = int(round(fs.t_inject / dt))
    nominal_i = max(load.total / n, 1.0)
    nominal_v = max(supply.values)
    return SystemModel(
        params=p, dt=dt, steps_per_period=steps_per_period, k_samples=k_samples,
        plane=plane, load=load, supply=supply, fault_kind=kind, fault_step=step,
        threshold_fraction=detector.threshold_fraction, tau_floor=detector.tau_floor,
        n_persist=detector.n_persist, isolation=bool(isolation),
        trip_steps=int(round(nonnegative("fuses.trip_delay", trip_delay) / dt)),
        shoot_through=bool(shoot_through), noise_std=nonnegative("simulation.sensor_noise_std", noise_std),
        blowup_i=blowup_factor * nominal_i, blowup_v=blowup_factor * nominal_v,
    )


@dataclass
class SystemState:
    """Mutable kernel arrays plus read-only views as per-VR records."""
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    ring: np.ndarray
    step: np.ndarray
    dt: float
    steps_per_period: int
    trip_delay: float = 0.0

    def copy(self):
        return replace(self, x=self.x.copy(), z=self.z.copy(), s=self.s.copy(),
                       ring=self.ring.copy(), step=self.step.copy())

    @property
    def time(self):
        return int(self.step[0]) * self.dt

    @property
    def v_plane(self):
        return float(self.s[K.S_VP])

    @property
    def converters(self):
        phase = (int(self.step[0]) % self.steps_per_period) / self.steps_per_period
        return [
            ConverterState(
                i_L=float(r[K.X_IL]), v_c=float(r[K.X_VC]), duty=float(r[K.X_DUTY]),
                integ=float(r[K.X_INTEG]), phase=phase,
                hs_conducting=bool(q[K.Z_HS]), ls_conducting=bool(q[K.Z_LS]),
            )
            for r, q in zip(self.x, self.z)
        ]

    @property
    def detectors(self):
        return [
            DetectorState(
                epsilon=float(r[K.X_EPS]), tau=float(r[K.X_TAU]), violation_count=int(q[K.Z_VIOL]),
                flag=bool(q[K.Z_FLAG]), t_flag=None if np.isnan(r[K.X_TFLAG]) else float(r[K.X_TFLAG]),
            )
            for r, q in zip(self.x, self.z)
        ]

    @property
    def fuses(self):
        out = []
        for r, q in zip(self.x, self.z):
            status = FuseStatus(int(q[K.Z_FUSE]))
            t_open = None if status == FuseStatus.INTACT else float(q[K.Z_OPEN_STEP]) * self.dt
            out.append(FuseState(status, status, self.trip_delay, t_open))
        return out


def initial_state(model, trip_delay=0.0):
    """Periodic steady state for the load and input at t = 0.

    Every VR starts at the valley of its ripple with the duty that balances
    its conduction drops, and the integrator is back-solved so the first
    controller update holds that duty. Starting here instead of from a cold
    plane skips a long, uninteresting soft-start transient.
    """
    n = model.n_vr
    p = model.params
    f_sw = 1.0 / model.period
    v_in = model.supply.at(0.0)
    i = model.load.at(0.0) / n
    x = np.zeros((n, K.N_XSTATE))
    z = np.zeros((n, K.N_ZSTATE), dtype=np.int64)
    s = np.zeros(K.N_SSTATE)
    vc_all = np.empty(n)
    for k in range(n):
        vc = p[k, K.P_VREF] - p[k, K.P_DROOP] * i
        d = vc / v_in
        for _ in range(50):
            d = (vc + i * K.r_eff(p[k, K.P_RL], p[k, K.P_RHS], p[k, K.P_RLS], d)) / v_in
        d = min(max(d, p[k, K.P_DMIN]), p[k, K.P_DMAX])
        i_valley = i - 0.5 * K.slope_hs(v_in, vc, d, p[k, K.P_L], f_sw)
        err = p[k, K.P_VREF] - p[k, K.P_DROOP] * i_valley - vc
        x[k, K.X_IL] = i_valley
        x[k, K.X_VC] = vc
        x[k, K.X_DUTY] = d
        x[k, K.X_ISENSE] = i_valley
        if p[k, K.P_KI] > 0.0:
            x[k, K.X_INTEG] = (d - p[k, K.P_KP] * err + p[k, K.P_KC] * i_valley) / p[k, K.P_KI]
        vc_all[k] = vc
    x[:, K.X_TFLAG] = np.nan
    # the emulator has no estimate until K samples are buffered
    x[:, [K.X_EST, K.X_EPS, K.X_TAU]] = np.nan
    x[:, K.X_TOPEN] = np.nan
    s[K.S_VP] = float(np.mean(vc_all)) - i * model.plane.r_link
    # sample 0 is taken at t = 0; the kernel records samples from n = 1 on
    ring = np.zeros((n, model.k_samples))
    ring[:, 0] = x[:, K.X_IL]
    return SystemState(
        x=x, z=z, s=s, ring=ring, step=np.zeros(1, dtype=np.int64),
        dt=model.dt, steps_per_period=model.steps_per_period, trip_delay=trip_delay,
    )


@dataclass
class LogBuffer:
    """Preallocated per-row records written by the kernel."""
    rows: int
    n_vr: int
    every: int
    t: np.ndarray = field(init=False)
    vr: np.ndarray = field(init=False)
    sys: np.ndarray = field(init=False)
    row: np.ndarray = field(init=False)

    def __post_init__(self):
        self.t = np.zeros(self.rows)
        self.vr = np.zeros((self.rows, self.n_vr, K.N_VRCOL))
        self.sys = np.zeros((self.rows, K.N_SYSCOL))
        self.row = np.zeros(1, dtype=np.int64)

    @property
    def filled(self):
        return int(self.row[0])


def advance(model, state, n_steps, log=None):
    """Run ``n_steps`` integration steps in place.

    Returns:
        ``True`` if the run finished, ``False`` if it hit the divergence bound.
    """
    if log is None:
        log = LogBuffer(0, model.n_vr, 0)
    load_t, load_v = model.load.arrays()
    vin_t, vin_v = model.supply.arrays()
    status = K.simulate(
        int(n_steps), model.dt, model.steps_per_period, model.steps_per_period // model.k_samples,
        model.k_samples, model.params, state.x, state.z, state.s, state.ring, state.step,
        model.fault_kind, model.fault_step, model.shoot_through, model.isolation, model.trip_steps,
        model.threshold_fraction, model.tau_floor, model.n_persist,
        load_t, load_v, vin_t, vin_v, model.plane.c_plane, model.plane.r_link,
        model.noise_std, model.blowup_i, model.blowup_v,
        log.every, log.t, log.vr, log.sys, log.row,
    )
    return status == K.STATUS_OK


def system_step(config, state, dt=None):
    """Advance a copy of ``state`` by one integration step.

    Args:
        config: A ``SystemModel`` or anything with a ``model()`` method
            (such as ``SystemConfig``).
        state: Current ``SystemState``; left untouched.
        dt: Optional check against the configured step.

    Returns:
        The new ``SystemState``.

    Raises:
        SimulationDiverged: The step left the blow-up bound.
    """
    model = config if isinstance(config, SystemModel) else config.model()
    if dt is not None and not np.isclose(dt, model.dt, rtol=1e-12, atol=0.0):
        raise ConfigError("dt", f"system is configured for dt={model.dt!r}")
    new = state.copy()
    if not advance(model, new, 1):
        raise SimulationDiverged(f"state left the blow-up bound at t={new.time:.9g} s")
    return new
