"""Greedy source selection against exhaustive search on the selection suite."""

import argparse
import time

from cdar import suites
from cdar.data import synth_generate, window
from cdar.ussar import CadConfig, brute_force_select, select_sources

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--k", type=int, nargs="+", default=[1, 2, 3])
    args = ap.parse_args()
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        ws = [window(d, suites.WINDOW, suites.STRIDE)
              for d in synth_generate(suites.selection_suite(seed))]
        for k in args.k:
            res = select_sources(ws[0], ws[1:], k, cfg=CadConfig.seeded(seed))
            bf = brute_force_select(ws[0], ws[1:], k)
            acc = dict(bf.table)[tuple(sorted(res.selected))]
            print(f"seed {seed} K={k}  greedy {res.selected} {100 * acc:.1f}  "
                  f"oracle {list(bf.best)} {100 * bf.best_accuracy:.1f}  "
                  f"gap {100 * (bf.best_accuracy - acc):.2f}")
    print(f"{time.perf_counter() - t0:.0f}s")
