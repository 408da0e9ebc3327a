"""Median decay of the boundary martingale on a recurrent binary tree.

Samples R independent environments at w = 0.5 w_c on the deterministic
binary tree and prints median(ln psi_n) against depth, with the pairwise
slopes next to the annealed rate -tau.  At desk-size depths the measured
slope overshoots -tau noticeably; the second-order depth correction
decays like n^{-2/3} and is still large at n ~ 16.  Push depths higher
to watch the gap shrink (cost grows like 2^n per replica).

Run:  python3 demos/recurrent_decay.py [R]
"""

import sys

import numpy as np

from vrjp import green, phase, potential, trees


def median_log_psi(depths, replicas, w, seed):
    rng = np.random.default_rng(seed)
    law = trees.OffspringLaw.deterministic(2)
    out = {n: [] for n in depths}
    # eliminate() reads offspring counts on the boundary generation, so
    # sample one level past the deepest requested depth
    n_max = max(depths) + 1
    for _ in range(replicas):
        tree = trees.sample_tree(law, n_max, rng)
        pot = potential.attach_potential(tree, w, rng)
        for n in depths:
            out[n].append(green.eliminate(tree, pot, n).psi_root)
    return {n: np.median(np.log(out[n])) for n in depths}


def main():
    replicas = int(sys.argv[1]) if len(sys.argv) > 1 else 400
    m = 2.0
    w = 0.5 * phase.critical_weight(m)
    tau = phase.decay_rate(m, w)
    depths = [4, 6, 8, 10, 12]

    med = median_log_psi(depths, replicas, w, seed=20260817)

    print(f"w = {w:.8g} (half critical), annealed rate tau = {tau:.6f}")
    print(f"{'n':>4}  {'med ln psi':>12}  {'slope':>10}")
    prev = None
    for n in depths:
        slope = "" if prev is None else f"{(med[n] - med[prev]) / (n - prev):10.4f}"
        print(f"{n:4d}  {med[n]:12.4f}  {slope:>10}")
        prev = n
    print(f"{'':4}  {'':12}  {-tau:10.4f}  <- -tau (n -> inf)")


if __name__ == "__main__":
    main()
