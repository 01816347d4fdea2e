"""Analytical inductor-current emulator.

The estimate propagates the current measured one switching period earlier
through one cycle of the averaged buck dynamics::

    i_est(n) = i(n-K) * (1 - r_eff / (L f_sw)) + (v_in(n) D(n) - v_o(n)) / (L f_sw)

Samples are phase-locked to the PWM period, so ``i(n-K)`` sits at the same
ripple phase as ``i(n)`` and the ripple cancels.
"""

from collections import deque
from dataclasses import dataclass, field

from . import _kernel as K
from ._validate import ConfigError, integer, nonnegative, positive


@dataclass(frozen=True)
class EmulatorConfig:
    K: int = 20
    L: float = 1.5e-6
    f_sw: float = 1e6
    r_L: float = 4e-3
    r_hs: float = 5e-3
    r_ls: float = 3e-3

    def __post_init__(self):
        integer("emulator.K", self.K, minimum=2)
        positive("emulator.L", self.L)
        positive("emulator.f_sw", self.f_sw)
        for name in ("r_L", "r_hs", "r_ls"):
            nonnegative(f"emulator.{name}", getattr(self, name))
        # r_eff is affine in D, so its extremes sit at D = 0 and D = 1
        worst = self.r_L + max(self.r_hs, self.r_ls)
        if worst / (self.L * self.f_sw) >= 1.0:
            raise ConfigError("emulator.L", "r_eff / (L f_sw) must stay below 1 for stability")

    @classmethod
    def from_converter(cls, cp, K=20):
        return cls(K=K, L=cp.L, f_sw=cp.f_sw, r_L=cp.r_L, r_hs=cp.r_hs, r_ls=cp.r_ls)


@dataclass
class SampleWindow:
    """Rolling window of emulator inputs.

    Holds samples ``n-K`` through ``n``; the estimate needs the oldest
    current and the newest operating point.
    """
    K: int
    currents: deque = field(init=False)
    v_in: float = 0.0
    v_o: float = 0.0
    duty: float = 0.0
    n: int = -1

    def __post_init__(self):
        integer("emulator.K", self.K, minimum=2)
        self.currents = deque(maxlen=self.K + 1)

    def push(self, i_L, v_in, v_o, duty):
        self.currents.append(float(i_L))
        self.v_in, self.v_o, self.duty = float(v_in), float(v_o), float(duty)
        self.n += 1

    @property
    def warm(self):
        return len(self.currents) == self.K + 1

    @property
    def i_lagged(self):
        """Current measured one period before the newest sample."""
        return self.currents[0]


def r_eff(cfg, duty):
    """Duty-weighted series resistance seen by the inductor (ohm)."""
    if not 0.0 <= duty <= 1.0:
        raise ConfigError("duty", f"must lie in [0, 1], got {duty!r}")
    return float(K.r_eff(cfg.r_L, cfg.r_hs, cfg.r_ls, duty))


def estimate(cfg, window):
    """Estimated inductor current at the newest sample.

    Returns ``None`` while the window is still warming up; the detector
    treats such samples as non-evaluable.
    """
    if window.K != cfg.K:
        raise ConfigError("emulator.K", "window and config disagree on K")
    if not window.warm:
        return None
    return float(K.estimate_current(
        window.i_lagged, window.v_in, window.duty, window.v_o,
        cfg.r_L, cfg.r_hs, cfg.r_ls, cfg.L, cfg.f_sw,
    ))
