"""Watch the emulator realign after a 4 V to 5 V input step.

Run with ``python demos/input_step_realignment.py``. Prints the estimation
error relative to the detector threshold for the samples around the step on
the single-VR reference system.
"""

import numpy as np

from dvpd import load_config, run_scenario
from dvpd.scenario import set_dotted

T_STEP = 0.5e-3


def main():
    raw = load_config("single_vr.json").raw
    raw = set_dotted(raw, "supply", {"times": [0.0, T_STEP, T_STEP], "voltages": [4.0, 4.0, 5.0]})
    cfg = load_config(raw)
    trace, rep = run_scenario(cfg)
    i0 = int(np.searchsorted(trace.t, T_STEP))
    print(f"{'t (us)':>8} {'i_L (A)':>9} {'estimate':>9} {'eps/tau':>8}")
    for n in range(i0 - 2, i0 + cfg.k_samples + 4):
        ratio = trace.vr["epsilon"][n, 0] / trace.vr["tau"][n, 0]
        print(f"{trace.t[n] * 1e6:8.2f} {trace.vr['i_L'][n, 0]:9.3f} {trace.vr['i_L_est'][n, 0]:9.3f} "
              f"{ratio:8.3f}")
    print(f"flags raised: {rep.false_positive_count}")


if __name__ == "__main__":
    main()
