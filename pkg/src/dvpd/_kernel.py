"""Compiled inner loop of the system simulator.

Everything in here works on flat numpy arrays so numba can compile it. The
public modules wrap these functions with dataclasses; the scalar helpers are
shared between the single-element APIs and the full-system loop so the two
can never drift apart.

Integration is trapezoidal (implicit midpoint on a piecewise-linear network).
Each step is split at every PWM edge that falls inside it, so each sub-step
has a fixed switch topology and the linear solve is exact. Energy terms are
evaluated from the same midpoint values the integrator uses, which makes the
energy ledger close to rounding error.
"""

import numpy as np
from numba import njit

# fault kinds
NO_FAULT = -1
HS_SCF = 0
LS_SCF = 1
HS_OCF = 2
LS_OCF = 3

# conduction modes of one power stage
MODE_BLOCKED = 0
MODE_HS = 1
MODE_LS = 2
MODE_SHOOT = 3
MODE_LS_DIODE = 4
MODE_HS_DIODE = 5

# fuse states
FUSE_INTACT = 0
FUSE_TRIPPING = 1
FUSE_OPEN = 2

# per-VR parameter columns
P_L = 0
P_C = 1
P_RL = 2
P_RHS = 3
P_RLS = 4
P_VD = 5
P_DROOP = 6
P_VREF = 7
P_KP = 8
P_KI = 9
P_DMIN = 10
P_DMAX = 11
P_KC = 12
N_PARAM = 13

# per-VR continuous state columns
X_IL = 0
X_VC = 1
X_DUTY = 2
X_INTEG = 3
X_EST = 4
X_EPS = 5
X_TAU = 6
X_TFLAG = 7
X_EIN = 8
X_EDISS = 9
X_ISENSE = 10
X_TOPEN = 11
N_XSTATE = 12

# per-VR discrete state columns
Z_FLAG = 0
Z_VIOL = 1
Z_FUSE = 2
Z_OPEN_STEP = 3
Z_HS = 4
Z_LS = 5
N_ZSTATE = 6

# system state slots
S_VP = 0
S_ELOAD = 1
S_ECLAMP = 2
N_SSTATE = 3

# logged per-VR columns
C_IL = 0
C_EST = 1
C_EPS = 2
C_TAU = 3
C_FLAG = 4
C_DUTY = 5
C_VC = 6
C_FUSE_IN = 7
C_FUSE_OUT = 8
C_PIN = 9
C_PDISS = 10
C_ILINK = 11
N_VRCOL = 12

# logged system columns
Y_VP = 0
Y_ILOAD = 1
Y_VIN = 2
Y_PLOAD = 3
Y_ESTORED = 4
Y_IAVG = 5
N_SYSCOL = 6

STATUS_OK = 0
STATUS_DIVERGED = 1


@njit(cache=True)
def seed_rng(seed):
    np.random.seed(seed)


@njit(cache=True)
def pwl_eval(times, values, t):
    """Right-continuous piecewise-linear lookup; repeated times encode jumps."""
    n = times.shape[0]
    if n == 1 or t <= times[0]:
        return values[0]
    if t >= times[n - 1]:
        return values[n - 1]
    i = np.searchsorted(times, t, side="right") - 1
    t0 = times[i]
    t1 = times[i + 1]
    if t1 <= t0:
        return values[i + 1]
    return values[i] + (values[i + 1] - values[i]) * (t - t0) / (t1 - t0)


@njit(cache=True)
def fault_overlay(kind, active, hs, ls, shoot_through):
    """Effective switch states after a fault; without ``shoot_through`` the
    driver interlock keeps the complementary switch off during an SCF."""
    if active:
        if kind == HS_SCF:
            hs = True
            if not shoot_through:
                ls = False
        elif kind == LS_SCF:
            ls = True
            if not shoot_through:
                hs = False
        elif kind == HS_OCF:
            hs = False
        elif kind == LS_OCF:
            ls = False
    return hs, ls


@njit(cache=True)
def select_mode(hs_path, ls_path, i0, hs_diode_ok):
    if hs_path and ls_path:
        return MODE_SHOOT
    if hs_path:
        return MODE_HS
    if ls_path:
        return MODE_LS
    if i0 > 0.0:
        return MODE_LS_DIODE
    if i0 < 0.0 and hs_diode_ok:
        return MODE_HS_DIODE
    return MODE_BLOCKED


@njit(cache=True)
def branch_thevenin(mode, v_in, r_l, r_hs, r_ls, v_d):
    """Thevenin source and series resistance seen by the inductor."""
    if mode == MODE_HS:
        return v_in, r_l + r_hs
    if mode == MODE_LS:
        return 0.0, r_l + r_ls
    if mode == MODE_SHOOT:
        rs = r_hs + r_ls
        return v_in * r_ls / rs, r_l + r_hs * r_ls / rs
    if mode == MODE_LS_DIODE:
        return -v_d, r_l
    if mode == MODE_HS_DIODE:
        return v_in + v_d, r_l
    return 0.0, 0.0


@njit(cache=True)
def input_current(mode, v_in, i_mid, r_hs, r_ls):
    if mode == MODE_HS or mode == MODE_HS_DIODE:
        return i_mid
    if mode == MODE_SHOOT:
        return (v_in + i_mid * r_ls) / (r_hs + r_ls)
    return 0.0


@njit(cache=True)
def branch_coefficients(mode, i0, v_th, r_series, ind, h):
    """Midpoint inductor current as a + b * v_c(mid) for a trapezoidal step."""
    if mode == MODE_BLOCKED:
        return 0.0, 0.0
    den = 2.0 * ind + h * r_series
    return (2.0 * ind * i0 + h * v_th) / den, -h / den


@njit(cache=True)
def slope_hs(v_in, v_o, duty, ind, f_sw):
    return (v_in - v_o) * duty / (ind * f_sw)


@njit(cache=True)
def slope_ls(v_o, duty, ind, f_sw):
    return -v_o * (1.0 - duty) / (ind * f_sw)


@njit(cache=True)
def r_eff(r_l, r_hs, r_ls, duty):
    return r_l + r_hs * duty + r_ls * (1.0 - duty)


@njit(cache=True)
def estimate_current(i_prev, v_in, duty, v_o, r_l, r_hs, r_ls, ind, f_sw):
    lf = ind * f_sw
    return i_prev * (1.0 - r_eff(r_l, r_hs, r_ls, duty) / lf) + (v_in * duty - v_o) / lf


@njit(cache=True)
def threshold(fraction, floor, i_prev):
    tau = fraction * abs(i_prev)
    return tau if tau > floor else floor


@njit(cache=True)
def detector_update(eps, tau, count, flag, n_persist):
    """Returns (violation_count, flag, newly_asserted)."""
    if eps > tau:
        count += 1
    else:
        count = 0
    if not flag and count >= n_persist:
        return count, True, True
    return count, flag, False


@njit(cache=True)
def pi_update(v_ref, droop, v_sense, i_sense, integ, kp, ki, kc, d_min, d_max, period):
    """One PI update on the droop-shifted error; returns (duty, integ).

    ``kc`` feeds the sensed inductor current back directly (damping); its
    static offset is absorbed by the integrator. The integrator is frozen
    while the output sits on a bound and the error pushes further out.
    """
    err = v_ref - droop * i_sense - v_sense
    trial = integ + err * period
    d = kp * err + ki * trial - kc * i_sense
    if d > d_max:
        return d_max, integ if err > 0.0 else trial
    if d < d_min:
        return d_min, integ if err < 0.0 else trial
    return d, trial


@njit(cache=True)
def simulate(
    n_steps, dt, steps_per_period, samples_stride, k_samples,
    params, x, z, s, ring, step_counter,
    fault_kind, fault_step, shoot_through, isolation, trip_steps,
    thr_fraction, tau_floor, n_persist,
    load_t, load_v, vin_t, vin_v,
    c_plane, r_link,
    noise_std, blowup_i, blowup_v,
    log_every, log_t, log_vr, log_sys, log_row,
):
    """Advance the whole system by ``n_steps`` integration steps in place.

    ``step_counter`` and ``log_row`` are one-element arrays so the caller can
    resume. Returns a status code.
    """
    n_vr = params.shape[0]
    period = dt * steps_per_period
    f_sw = 1.0 / period
    edges = np.empty(n_vr + 2)
    a_c = np.empty(n_vr)
    b_c = np.empty(n_vr)
    c_c = np.empty(n_vr)
    d_c = np.empty(n_vr)
    modes = np.empty(n_vr, dtype=np.int64)
    vth = np.empty(n_vr)
    rser = np.empty(n_vr)
    i_mid = np.empty(n_vr)
    vc_mid = np.empty(n_vr)
    acc_in = np.zeros(n_vr)
    acc_diss = np.zeros(n_vr)
    acc_link = np.zeros(n_vr)
    acc_load = 0.0
    acc_iload = 0.0
    n_rows = log_t.shape[0]

    for _ in range(n_steps):
        j = step_counter[0]
        t0 = j * dt
        s_in = j % steps_per_period

        # gate commands and fault overlays; edge positions in step fractions
        n_edges = 0
        edges[n_edges] = 0.0
        n_edges += 1
        for k in range(n_vr):
            f = x[k, X_DUTY] * steps_per_period - s_in
            if f > 0.0 and f < 1.0:
                edges[n_edges] = f
                n_edges += 1
        edges[n_edges] = 1.0
        n_edges += 1
        edges[:n_edges].sort()

        for e in range(n_edges - 1):
            fa = edges[e]
            fb = edges[e + 1]
            if fb - fa <= 0.0:
                continue
            h = (fb - fa) * dt
            tm = t0 + 0.5 * (fa + fb) * dt
            v_in = pwl_eval(vin_t, vin_v, tm)
            i_load = pwl_eval(load_t, load_v, tm)
            phase_steps = s_in + 0.5 * (fa + fb)
            vp0 = s[S_VP]

            sum_num = 2.0 * c_plane * vp0 - h * i_load
            sum_den = 2.0 * c_plane
            for k in range(n_vr):
                hs_cmd = phase_steps < x[k, X_DUTY] * steps_per_period
                ls_cmd = not hs_cmd
                active = fault_kind[k] != NO_FAULT and j >= fault_step[k]
                hs_eff, ls_eff = fault_overlay(fault_kind[k], active, hs_cmd, ls_cmd, shoot_through)
                input_open = z[k, Z_FUSE] == FUSE_OPEN
                z[k, Z_HS] = 1 if (hs_eff and not input_open) else 0
                z[k, Z_LS] = 1 if ls_eff else 0
                # an open high-side device takes its body diode with it
                hs_diode_ok = not input_open and not (active and fault_kind[k] == HS_OCF)
                mode = select_mode(hs_eff and not input_open, ls_eff, x[k, X_IL], hs_diode_ok)
                modes[k] = mode
                v_t, r_s = branch_thevenin(
                    mode, v_in, params[k, P_RL], params[k, P_RHS], params[k, P_RLS], params[k, P_VD]
                )
                vth[k] = v_t
                rser[k] = r_s
                a, b = branch_coefficients(mode, x[k, X_IL], v_t, r_s, params[k, P_L], h)
                a_c[k] = a
                b_c[k] = b
                # both fuses share one state: input and output open together
                g = 0.0 if input_open else 1.0 / r_link
                cap = params[k, P_C]
                den = 2.0 * cap - h * b + h * g
                c_c[k] = (2.0 * cap * x[k, X_VC] + h * a) / den
                d_c[k] = h * g / den
                sum_num += h * g * c_c[k]
                sum_den += h * g * (1.0 - d_c[k])
            vp_mid = sum_num / sum_den

            for k in range(n_vr):
                g = 0.0 if z[k, Z_FUSE] == FUSE_OPEN else 1.0 / r_link
                vcm = c_c[k] + d_c[k] * vp_mid
                im = a_c[k] + b_c[k] * vcm
                vc_mid[k] = vcm
                i_mid[k] = im
                i1 = 2.0 * im - x[k, X_IL]
                mode = modes[k]
                ind = params[k, P_L]
                if mode == MODE_BLOCKED:
                    # a current with no path left is cut off; its energy is lost
                    e_cut = 0.5 * ind * x[k, X_IL] * x[k, X_IL]
                    s[S_ECLAMP] += e_cut
                    acc_diss[k] += e_cut
                    x[k, X_EDISS] += e_cut
                    i1 = 0.0
                if mode == MODE_LS_DIODE and i1 < 0.0:
                    s[S_ECLAMP] += 0.5 * ind * i1 * i1
                    acc_diss[k] += 0.5 * ind * i1 * i1
                    x[k, X_EDISS] += 0.5 * ind * i1 * i1
                    i1 = 0.0
                elif mode == MODE_HS_DIODE and i1 > 0.0:
                    s[S_ECLAMP] += 0.5 * ind * i1 * i1
                    acc_diss[k] += 0.5 * ind * i1 * i1
                    x[k, X_EDISS] += 0.5 * ind * i1 * i1
                    i1 = 0.0
                x[k, X_IL] = i1
                x[k, X_VC] = 2.0 * vcm - x[k, X_VC]
                i_in = input_current(mode, v_in, im, params[k, P_RHS], params[k, P_RLS])
                e_in = h * v_in * i_in
                e_conv = h * (v_in * i_in - vth[k] * im + rser[k] * im * im)
                i_link = g * (vcm - vp_mid)
                e_link = h * i_link * i_link / g if g > 0.0 else 0.0
                acc_link[k] += h * i_link
                acc_in[k] += e_in
                acc_diss[k] += e_conv + e_link
                x[k, X_EIN] += e_in
                x[k, X_EDISS] += e_conv + e_link
            e_load = h * vp_mid * i_load
            acc_load += e_load
            acc_iload += h * i_load
            s[S_ELOAD] += e_load
            s[S_VP] = 2.0 * vp_mid - vp0

        j1 = j + 1
        step_counter[0] = j1
        t1 = j1 * dt
        s1 = j1 % steps_per_period

        # sensing, emulator and detector on the K x f_sw grid
        if j1 % samples_stride == 0:
            n = j1 // samples_stride
            slot = n % k_samples
            v_in_s = pwl_eval(vin_t, vin_v, t1)
            for k in range(n_vr):
                meas = x[k, X_IL]
                if noise_std > 0.0:
                    meas += noise_std * np.random.standard_normal()
                if n >= k_samples:
                    i_prev = ring[k, slot]
                    est = estimate_current(
                        i_prev, v_in_s, x[k, X_DUTY], x[k, X_VC],
                        params[k, P_RL], params[k, P_RHS], params[k, P_RLS], params[k, P_L], f_sw,
                    )
                    eps = abs(est - meas)
                    tau = threshold(thr_fraction, tau_floor, i_prev)
                    cnt, flag, new = detector_update(
                        eps, tau, z[k, Z_VIOL], z[k, Z_FLAG] == 1, n_persist
                    )
                    z[k, Z_VIOL] = cnt
                    z[k, Z_FLAG] = 1 if flag else 0
                    x[k, X_EST] = est
                    x[k, X_EPS] = eps
                    x[k, X_TAU] = tau
                    if new:
                        x[k, X_TFLAG] = t1
                        if isolation and z[k, Z_FUSE] == FUSE_INTACT:
                            z[k, Z_FUSE] = FUSE_TRIPPING
                            z[k, Z_OPEN_STEP] = j1 + trip_steps
                ring[k, slot] = meas

        # controller at the period boundary
        if s1 == 0:
            for k in range(n_vr):
                x[k, X_ISENSE] = x[k, X_IL]
                d, integ = pi_update(
                    params[k, P_VREF], params[k, P_DROOP], x[k, X_VC], x[k, X_IL],
                    x[k, X_INTEG], params[k, P_KP], params[k, P_KI], params[k, P_KC],
                    params[k, P_DMIN], params[k, P_DMAX], period,
                )
                x[k, X_DUTY] = d
                x[k, X_INTEG] = integ

        # fuses
        for k in range(n_vr):
            if z[k, Z_FUSE] == FUSE_TRIPPING and j1 >= z[k, Z_OPEN_STEP]:
                z[k, Z_FUSE] = FUSE_OPEN
                x[k, X_TOPEN] = t1

        # divergence guard
        bad = not (abs(s[S_VP]) < blowup_v)
        for k in range(n_vr):
            if not (abs(x[k, X_IL]) < blowup_i and abs(x[k, X_VC]) < blowup_v):
                bad = True

        if log_every > 0 and j1 % log_every == 0 and log_row[0] < n_rows:
            r = log_row[0]
            span = log_every * dt
            log_t[r] = t1
            e_st = 0.5 * c_plane * s[S_VP] * s[S_VP]
            for k in range(n_vr):
                e_st += 0.5 * params[k, P_L] * x[k, X_IL] ** 2 + 0.5 * params[k, P_C] * x[k, X_VC] ** 2
                log_vr[r, k, C_IL] = x[k, X_IL]
                log_vr[r, k, C_EST] = x[k, X_EST]
                log_vr[r, k, C_EPS] = x[k, X_EPS]
                log_vr[r, k, C_TAU] = x[k, X_TAU]
                log_vr[r, k, C_FLAG] = z[k, Z_FLAG]
                log_vr[r, k, C_DUTY] = x[k, X_DUTY]
                log_vr[r, k, C_VC] = x[k, X_VC]
                log_vr[r, k, C_FUSE_IN] = z[k, Z_FUSE]
                log_vr[r, k, C_FUSE_OUT] = z[k, Z_FUSE]
                log_vr[r, k, C_PIN] = acc_in[k] / span
                log_vr[r, k, C_PDISS] = acc_diss[k] / span
                log_vr[r, k, C_ILINK] = acc_link[k] / span
                acc_in[k] = 0.0
                acc_diss[k] = 0.0
                acc_link[k] = 0.0
            log_sys[r, Y_VP] = s[S_VP]
            log_sys[r, Y_ILOAD] = pwl_eval(load_t, load_v, t1)
            log_sys[r, Y_VIN] = pwl_eval(vin_t, vin_v, t1)
            log_sys[r, Y_PLOAD] = acc_load / span
            log_sys[r, Y_ESTORED] = e_st
            log_sys[r, Y_IAVG] = acc_iload / span
            acc_load = 0.0
            acc_iload = 0.0
            log_row[0] = r + 1

        if bad:
            return STATUS_DIVERGED
    return STATUS_OK
