"""CAD on the synthetic ladder: base domain vs five increasingly shifted copies."""

import argparse

from cdar import suites
from cdar.data import split, synth_generate, window
from cdar.distance import KineticConfig, ProbeConfig, cad


def run(seed: int) -> list[float]:
    ws = [window(d, suites.WINDOW, suites.STRIDE) for d in synth_generate(suites.ladder_spec(seed))]
    probe, kin = ProbeConfig(seed=seed), KineticConfig(seed=seed)
    h1, h2 = split(ws[0], 0.5, seed)
    return [cad(h1, h2, probe=probe, kinetic=kin).combined] + [
        cad(ws[0], w, probe=probe, kinetic=kin).combined for w in ws[1:]]


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    print("seed  self   " + "  ".join(f"lvl{i}" for i in range(1, 6)))
    for seed in range(args.seeds):
        row = run(seed)
        flag = "ok" if all(a < b for a, b in zip(row, row[1:])) else "NOT MONOTONE"
        print(f"{seed:4d}  " + "  ".join(f"{v:.3f}" for v in row) + f"  {flag}")
