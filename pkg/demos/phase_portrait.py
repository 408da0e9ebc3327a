"""Sweep the edge weight through the recurrence transition.

For a few offspring means m we locate the critical weight w_c(m), then
evaluate the optimal tilt and the annealed decay rate on a relative grid
w / w_c.  Below 1 the rate is positive (recurrent regime), at 1 it
vanishes with tilt exactly 1/2, above 1 the signed rate goes negative.

Run:  python3 demos/phase_portrait.py
"""

import numpy as np

from vrjp import phase


def sweep(m, rel_grid):
    wc = phase.critical_weight(m)
    rows = []
    for rel in rel_grid:
        s = phase.classify(m, rel * wc)
        rows.append((rel, s.tilt, s.decay_rate, s.regime))
    return wc, rows


def main():
    rel_grid = np.array([0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 4.0])
    for m in (1.5, 2.0, 3.0, 5.0):
        wc, rows = sweep(m, rel_grid)
        print(f"m = {m:g}   w_c = {wc:.12g}   alpha = {phase.critical_slope(m):.6g}")
        print(f"  {'w/w_c':>6}  {'tilt':>10}  {'rate':>12}  regime")
        for rel, tilt, rate, regime in rows:
            print(f"  {rel:6.2f}  {tilt:10.6f}  {rate:12.8f}  {regime}")
        print()

    # at criticality the cube-root constants exist; show them once
    s = phase.classify(2.0, phase.critical_weight(2.0))
    print(f"critical m=2: sigma^2 = {s.step_variance:.6f}  rho_c = {s.cube_root_rate:.6f}")


if __name__ == "__main__":
    main()
