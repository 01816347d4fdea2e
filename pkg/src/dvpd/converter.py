"""Single synchronous buck regulator: power stage, PWM and duty controller.

The functions here operate on one regulator and return new state objects.
The full-system loop in :mod:`dvpd.pdn` runs the same arithmetic through the
compiled kernel; both paths share the scalar helpers in ``_kernel``.
"""

from dataclasses import dataclass, replace

from . import _kernel as K
from ._validate import ConfigError, finite, nonnegative, positive


@dataclass(frozen=True)
class ConverterParams:
    """Electrical constants of one buck VR.

    Defaults describe the 6 V to 1 V, 1 MHz reference regulator. The inductor
    is large enough that one cycle of ripple stays well inside the detector
    threshold (see the decisions ledger for the derivation).
    """
    v_in_nominal: float = 6.0     # V
    v_out_ref: float = 1.0        # V
    L: float = 1.5e-6             # H
    C_out: float = 100e-6         # F
    r_L: float = 4e-3             # ohm, inductor series resistance
    r_hs: float = 5e-3            # ohm, high-side on-resistance
    r_ls: float = 3e-3            # ohm, low-side on-resistance
    f_sw: float = 1e6             # Hz
    v_body_diode: float = 0.7     # V
    droop_r: float = 0.5e-3       # ohm, virtual droop resistance

    def __post_init__(self):
        positive("converter.v_in_nominal", self.v_in_nominal)
        positive("converter.v_out_ref", self.v_out_ref)
        positive("converter.L", self.L)
        positive("converter.C_out", self.C_out)
        positive("converter.f_sw", self.f_sw)
        for name in ("r_L", "r_hs", "r_ls", "v_body_diode", "droop_r"):
            nonnegative(f"converter.{name}", getattr(self, name))
        if self.v_out_ref >= self.v_in_nominal:
            raise ConfigError("converter.v_out_ref", "must be below v_in_nominal (step-down only)")

    @property
    def period(self):
        return 1.0 / self.f_sw


@dataclass(frozen=True)
class ControllerParams:
    """Voltage-mode PI gains with duty bounds.

    ``kc`` subtracts a multiple of the sensed inductor current from the duty
    command. It damps the LC output filter; the integrator absorbs its
    static offset so it does not shift the regulation point.
    """
    kp: float = 3.0         # 1/V
    ki: float = 4.0e4       # 1/(V*s)
    kc: float = 0.05        # 1/A
    d_min: float = 0.0
    d_max: float = 0.9

    def __post_init__(self):
        nonnegative("controller.kp", self.kp)
        nonnegative("controller.ki", self.ki)
        nonnegative("controller.kc", self.kc)
        finite("controller.d_min", self.d_min)
        finite("controller.d_max", self.d_max)
        if not 0.0 <= self.d_min < self.d_max <= 1.0:
            raise ConfigError("controller.d_max", "duty bounds must satisfy 0 <= d_min < d_max <= 1")


@dataclass(frozen=True)
class GateCommand:
    hs_on: bool
    ls_on: bool


@dataclass(frozen=True)
class ConverterState:
    """Dynamic state of one VR.

    Attributes:
        i_L: Inductor current (A).
        v_c: Local output capacitor voltage (V).
        duty: Commanded duty cycle.
        integ: Controller integrator (V*s).
        phase: Fraction of the switching period elapsed, in [0, 1).
        hs_conducting: High-side path conducting.
        ls_conducting: Low-side path conducting.
    """
    i_L: float = 0.0
    v_c: float = 0.0
    duty: float = 0.0
    integ: float = 0.0
    phase: float = 0.0
    hs_conducting: bool = False
    ls_conducting: bool = False

    def __post_init__(self):
        if not 0.0 <= self.duty <= 1.0:
            raise ConfigError("state.duty", f"must lie in [0, 1], got {self.duty!r}")
        if not 0.0 <= self.phase < 1.0:
            raise ConfigError("state.phase", f"must lie in [0, 1), got {self.phase!r}")


def pwm_gate(duty, phase):
    """Trailing-edge PWM: high side on for the first ``duty`` of the period."""
    hs = phase < duty
    return GateCommand(hs_on=hs, ls_on=not hs)


def _check_slope_args(v_in, v_o, duty, L, f_sw):
    for name, v in (("v_in", v_in), ("v_o", v_o), ("duty", duty)):
        finite(name, v)
    positive("L", L)
    positive("f_sw", f_sw)
    if not 0.0 <= duty <= 1.0:
        raise ConfigError("duty", f"must lie in [0, 1], got {duty!r}")


def slope_hs(v_in, v_o, duty, L, f_sw):
    """Inductor current rise over the high-side interval of one cycle (A)."""
    _check_slope_args(v_in, v_o, duty, L, f_sw)
    return float(K.slope_hs(v_in, v_o, duty, L, f_sw))


def slope_ls(v_o, duty, L, f_sw):
    """Inductor current change over the low-side interval of one cycle (A, <= 0)."""
    _check_slope_args(0.0, v_o, duty, L, f_sw)
    return float(K.slope_ls(v_o, duty, L, f_sw))


def controller_step(params, cp, state, v_sense, i_L, dt):
    """One PI update at a period boundary.

    The error is ``v_out_ref - droop_r * i_L - v_sense``. The integrator is
    frozen while the duty sits on a bound and the error pushes further out.

    Args:
        params: Controller gains and bounds.
        cp: Converter constants (reference and droop).
        state: Current state; ``duty`` and ``integ`` are updated.
        v_sense: Sensed output voltage (V).
        i_L: Sensed inductor current (A).
        dt: Update interval, normally one switching period (s).

    Returns:
        A new ``ConverterState`` with the updated duty and integrator.
    """
    positive("dt", dt)
    d, integ = K.pi_update(
        cp.v_out_ref, cp.droop_r, v_sense, i_L, state.integ,
        params.kp, params.ki, params.kc, params.d_min, params.d_max, dt,
    )
    return replace(state, duty=float(d), integ=float(integ))


def power_stage_step(cp, state, gate, v_node, dt, v_in=None, hs_diode=True):
    """Advance the inductor current by ``dt`` against a fixed output node.

    The switch network is piecewise linear, so a trapezoidal step with the
    conduction mode frozen over ``dt`` is exact up to the mode change. When
    neither switch conducts the low-side body diode carries positive current;
    negative current returns through the high-side body diode when
    ``hs_diode`` is set. A diode that would reverse clamps the current to 0
    and the stored energy it cuts off is booked as loss.

    Args:
        cp: Converter constants.
        state: Current state; ``i_L`` and the conduction flags are updated.
        gate: Gate command after any fault overlay.
        v_node: Output node voltage held over the step (V).
        dt: Step length (s).
        v_in: Input voltage; defaults to ``cp.v_in_nominal``.
        hs_diode: Whether the high-side body diode is available.

    Returns:
        ``(new_state, losses)`` with losses in joules for this step.
    """
    positive("dt", dt)
    v_in = cp.v_in_nominal if v_in is None else v_in
    mode = K.select_mode(gate.hs_on, gate.ls_on, state.i_L, hs_diode)
    v_th, r_s = K.branch_thevenin(mode, v_in, cp.r_L, cp.r_hs, cp.r_ls, cp.v_body_diode)
    a, b = K.branch_coefficients(mode, state.i_L, v_th, r_s, cp.L, dt)
    i_mid = a + b * v_node
    i_in = K.input_current(mode, v_in, i_mid, cp.r_hs, cp.r_ls)
    losses = dt * (v_in * i_in - v_th * i_mid + r_s * i_mid * i_mid)
    i1 = 2.0 * i_mid - state.i_L
    if mode == K.MODE_BLOCKED:
        # no conduction path is left; whatever current was flowing is cut off
        losses += 0.5 * cp.L * state.i_L ** 2
        i1 = 0.0
    if (mode == K.MODE_LS_DIODE and i1 < 0.0) or (mode == K.MODE_HS_DIODE and i1 > 0.0):
        losses += 0.5 * cp.L * i1 * i1
        i1 = 0.0
    new = replace(
        state,
        i_L=float(i1),
        hs_conducting=mode in (K.MODE_HS, K.MODE_SHOOT, K.MODE_HS_DIODE),
        ls_conducting=mode in (K.MODE_LS, K.MODE_SHOOT, K.MODE_LS_DIODE),
    )
    return new, float(losses)
