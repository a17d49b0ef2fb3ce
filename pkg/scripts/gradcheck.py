"""Finite-difference gradient report for every layer, both losses and the full network."""

import argparse
import time

from cdar.tnnar.gradcheck import check_layers, check_losses, check_network

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    t0 = time.perf_counter()
    worst: dict[str, float] = {}
    for seed in range(args.seeds):
        for errs in (check_layers(seed), check_losses(seed), check_network(seed)):
            for k, v in errs.items():
                worst[k] = max(worst.get(k, 0.0), v)
    for k, v in sorted(worst.items()):
        print(f"{k:28s} {v:.2e}")
    print(f"{time.perf_counter() - t0:.1f}s")
