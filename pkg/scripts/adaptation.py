"""Effect of the MMD term: mu=0 vs mu>0, and pooled sources vs the top-ranked one."""

import argparse
import statistics

from cdar import suites
from cdar.data import synth_generate
from cdar.experiments import train_transfer, windowed
from cdar.ussar import CadConfig, select_sources

SOURCES = ["right_arm", "left_leg", "right_leg", "left_arm", "chest"]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--mu", type=float, default=0.5)
    args = ap.parse_args()
    arch = suites.desk_arch()

    gains = []
    for seed in range(args.seeds):
        raw = windowed(synth_generate(suites.adaptation_task(seed)), suites.WINDOW, suites.STRIDE)
        a0 = train_transfer(raw, "target", ["source"], arch, suites.desk_train(0.0, seed)).accuracy
        a1 = train_transfer(raw, "target", ["source"], arch, suites.desk_train(args.mu, seed)).accuracy
        gains.append(100 * (a1 - a0))
        print(f"seed {seed}  mu=0 {100 * a0:.1f}  mu={args.mu} {100 * a1:.1f}")
    print(f"mean gain {statistics.fmean(gains):+.1f} points")

    gains = []
    for seed in range(args.seeds):
        raw = windowed(synth_generate(suites.transfer_suite(seed)), suites.WINDOW, suites.STRIDE)
        sel = select_sources(raw["torso"], [raw[n] for n in SOURCES], 3, cfg=CadConfig.seeded(seed))
        cfg = suites.desk_train(args.mu, seed)
        one = train_transfer(raw, "torso", sel.selected[:1], arch, cfg).accuracy
        many = train_transfer(raw, "torso", sel.selected, arch, cfg).accuracy
        gains.append(100 * (many - one))
        print(f"seed {seed}  {sel.selected[0]} {100 * one:.1f}  {sel.selected} {100 * many:.1f}")
    print(f"mean gain from pooling {statistics.fmean(gains):+.1f} points")
