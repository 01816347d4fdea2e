"""Threshold detector on the emulator residual, with persistence and latch."""

from dataclasses import dataclass, replace

import numpy as np

from . import _kernel as K
from ._validate import ConfigError, finite, integer, positive


@dataclass(frozen=True)
class DetectorConfig:
    threshold_fraction: float = 0.05
    tau_floor: float = 0.5  # A
    n_persist: int = 3

    def __post_init__(self):
        finite("detector.threshold_fraction", self.threshold_fraction)
        if not 0.0 < self.threshold_fraction < 1.0:
            raise ConfigError("detector.threshold_fraction", "must lie in (0, 1)")
        positive("detector.tau_floor", self.tau_floor)
        integer("detector.n_persist", self.n_persist, minimum=1)


@dataclass(frozen=True)
class DetectorState:
    epsilon: float = 0.0
    tau: float = 0.0
    violation_count: int = 0
    flag: bool = False
    t_flag: float | None = None


@dataclass(frozen=True)
class FalsePositive:
    """A flag that asserted before the fault it is meant to detect."""
    t_flag: float


def threshold(cfg, i_prev):
    """max(fraction * |i_prev|, floor), with ``i_prev`` one period back (A)."""
    return float(K.threshold(cfg.threshold_fraction, cfg.tau_floor, finite("i_prev", i_prev)))


def evaluate(cfg, state, i_est, i_meas, tau, t):
    """Compare one estimate against the measurement.

    ``i_est = None`` marks a sample taken while the emulator was warming;
    it leaves the state untouched.
    """
    if i_est is None:
        return state
    eps = abs(finite("i_est", i_est) - finite("i_meas", i_meas))
    count, flag, new = K.detector_update(eps, tau, state.violation_count, state.flag, cfg.n_persist)
    return replace(
        state,
        epsilon=eps,
        tau=float(tau),
        violation_count=int(count),
        flag=bool(flag),
        t_flag=float(t) if new else state.t_flag,
    )


def detection_latency(trace, spec):
    """Time from fault injection to the faulted VR's first flag.

    Args:
        trace: A ``WaveformTrace``.
        spec: The injected ``FaultSpec``.

    Returns:
        Latency in seconds, ``None`` if the VR never flagged, or a
        ``FalsePositive`` if it flagged before the injection time.
    """
    if trace.t[-1] < spec.t_inject:
        raise ConfigError("trace", "does not cover the injection time")
    t_flag = trace.t_flag[spec.vr_index]
    if np.isnan(t_flag):
        return None
    if t_flag < spec.t_inject:
        return FalsePositive(float(t_flag))
    return float(t_flag - spec.t_inject)
