"""Inject each fault kind into one VR of the 20-VR system and time detection.

Run with ``python demos/fault_latencies.py``. Prints detection latency,
fuse-open time and the efficiency trajectory for every fault kind.
"""

from dvpd import load_config, run_scenario
from dvpd.metrics import LATENCY_BUDGET
from dvpd.scenario import set_dotted

T_INJECT = 0.2e-3


def run(kind, isolation=True):
    raw = load_config("dvpd20.json").raw
    raw = set_dotted(raw, "simulation.duration", T_INJECT + 0.1e-3)
    raw = set_dotted(raw, "fuses.isolation", isolation)
    raw = set_dotted(raw, "faults", [{"kind": kind, "vr_index": 7, "t_inject": T_INJECT}])
    return run_scenario(load_config(raw))


def main():
    print(f"{'fault':8} {'latency':>10} {'isolated':>10} {'budget':>8} {'eta before':>11} {'eta after':>10}")
    for kind in ("HS_SCF", "LS_SCF", "HS_OCF", "LS_OCF"):
        _, rep = run(kind)
        lat = rep.detection_latency_us["7"]
        iso = rep.isolation_time_us["7"]
        budget = LATENCY_BUDGET.get(kind)
        print(f"{kind:8} {_us(lat):>10} {_us(iso):>10} {_us(budget and budget * 1e6):>8} "
              f"{rep.baseline_efficiency_pct:10.2f}% {rep.final_efficiency_pct:9.2f}%")


def _us(v):
    return "-" if v is None else f"{v:.2f} us"


if __name__ == "__main__":
    main()
