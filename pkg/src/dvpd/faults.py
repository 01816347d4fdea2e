"""Power-switch fault injection and flag-triggered dual-fuse isolation."""

import enum
from dataclasses import dataclass, replace

from . import _kernel as K
from ._validate import ConfigError, integer, nonnegative
from .converter import GateCommand


class FaultKind(enum.IntEnum):
    HS_SCF = K.HS_SCF   # high side shorted
    LS_SCF = K.LS_SCF   # low side shorted
    HS_OCF = K.HS_OCF   # high side open
    LS_OCF = K.LS_OCF   # low side open

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls[str(value).upper().replace("-", "_")]
        except KeyError:
            raise ConfigError("faults.kind", f"unknown fault kind {value!r}") from None


@dataclass(frozen=True)
class FaultSpec:
    kind: FaultKind
    vr_index: int
    t_inject: float  # s

    def __post_init__(self):
        object.__setattr__(self, "kind", FaultKind.parse(self.kind))
        integer("faults.vr_index", self.vr_index, minimum=0)
        nonnegative("faults.t_inject", self.t_inject)


class FuseStatus(enum.IntEnum):
    INTACT = K.FUSE_INTACT
    TRIPPING = K.FUSE_TRIPPING
    OPEN = K.FUSE_OPEN


@dataclass(frozen=True)
class FuseState:
    """Input and output fuse of one VR.

    Both fuses are driven by the same flag edge, so they always share a
    status; they are kept as separate fields because they sit on different
    nets (input rail and plane link).
    """
    input_fuse: FuseStatus = FuseStatus.INTACT
    output_fuse: FuseStatus = FuseStatus.INTACT
    trip_delay: float = 100e-9  # s
    t_open: float | None = None

    def __post_init__(self):
        nonnegative("fuses.trip_delay", self.trip_delay)

    @property
    def is_open(self):
        return self.input_fuse == FuseStatus.OPEN and self.output_fuse == FuseStatus.OPEN


def apply_fault_overlay(spec, t, gate, shoot_through=False):
    """Effective switch conduction after the fault at time ``t``.

    A shorted switch conducts permanently. By default the gate driver keeps
    the complementary switch off while its partner is shorted, so an SCF
    leaves the stage stuck on one rail. With ``shoot_through`` the
    complementary switch keeps following its command and both can conduct.

    Args:
        spec: Fault to apply, or ``None`` for a healthy stage.
        t: Query time (s).
        gate: Controller gate command.
        shoot_through: Let the complementary switch follow its command.

    Returns:
        A ``GateCommand`` describing which paths conduct.
    """
    if t < 0:
        raise ConfigError("t", "must be >= 0")
    if spec is None:
        return gate
    active = t >= spec.t_inject
    hs, ls = K.fault_overlay(int(spec.kind), active, gate.hs_on, gate.ls_on, shoot_through)
    return GateCommand(hs_on=bool(hs), ls_on=bool(ls))


def fuse_step(fuse, flag, t):
    """Advance both fuses to time ``t`` given the latched detector flag.

    The first flag seen starts both fuses tripping; they open
    ``trip_delay`` later. Open is absorbing.
    """
    if fuse.input_fuse == FuseStatus.INTACT:
        if not flag:
            return fuse
        fuse = replace(
            fuse,
            input_fuse=FuseStatus.TRIPPING,
            output_fuse=FuseStatus.TRIPPING,
            t_open=t + fuse.trip_delay,
        )
    if fuse.input_fuse == FuseStatus.TRIPPING and t >= fuse.t_open:
        fuse = replace(fuse, input_fuse=FuseStatus.OPEN, output_fuse=FuseStatus.OPEN)
    return fuse
