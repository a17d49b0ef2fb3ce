"""lambda x mu grid on the transfer suite."""

import argparse

from cdar import suites
from cdar.data import synth_generate
from cdar.experiments import sweep, windowed

SOURCES = ["right_arm", "left_leg", "right_leg", "left_arm", "chest"]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=3)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--grid", type=float, nargs="+", default=[0.0, 0.25, 0.5, 0.75, 1.0])
    args = ap.parse_args()
    raw = {s: windowed(synth_generate(suites.transfer_suite(s)), suites.WINDOW, suites.STRIDE)
           for s in range(args.seeds)}
    cells = sweep(raw, "torso", SOURCES, args.k, args.grid, args.grid, suites.desk_arch(),
                  suites.desk_train(),
                  on_cell=lambda c: print(f"lambda {c.lam:.2f}  mu {c.mu:.2f}  "
                                          f"{100 * c.mean:.1f} +- {100 * c.std:.1f}", flush=True))
    means = [c.mean for c in cells]
    print(f"max - min {100 * (max(means) - min(means)):.2f} points")
