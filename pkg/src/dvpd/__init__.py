"""Switching-level simulator of a distributed vertical power delivery system.

Twenty (by default) synchronous buck regulators share one low-voltage plane.
Each regulator carries an analytical inductor-current emulator, a threshold
detector on the emulator residual and a pair of flag-triggered fuses.
"""

from ._validate import ConfigError
from .converter import (ControllerParams, ConverterParams, ConverterState, GateCommand,
                        controller_step, power_stage_step, pwm_gate, slope_hs, slope_ls)
from .detector import (DetectorConfig, DetectorState, FalsePositive, detection_latency,
                       evaluate, threshold)
from .emulator import EmulatorConfig, SampleWindow, estimate, r_eff
from .faults import FaultKind, FaultSpec, FuseState, FuseStatus, apply_fault_overlay, fuse_step
from .metrics import (BudgetCheck, EfficiencySeries, SummaryReport, degradation_rate, efficiency,
                      energy_closure, latency_budget_check, summarize)
from .pdn import (LoadProfile, PlaneModel, SimulationDiverged, SupplyProfile, SystemModel,
                  SystemState, advance, build_model, initial_state, plane_step, system_step)
from .scenario import (SystemConfig, WaveformTrace, bundled_config_path, export_report,
                       export_trace, load_config, read_trace, run_scenario)

__all__ = [name for name in dir() if not name.startswith("_")]
