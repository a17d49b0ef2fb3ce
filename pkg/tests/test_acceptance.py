"""Acceptance criteria, one test each.

Every test records a PASS/FAIL line; the lines are printed in the terminal
summary (see conftest.py) and immediately with ``pytest -s``.
"""

import hashlib
import json
import statistics
import time

import numpy as np
import pytest

from cdar import suites
from cdar.cli import main
from cdar.data import WindowSet, load_manifest, split, synth_generate, window
from cdar.distance import KineticConfig, ProbeConfig, a_distance, cad, mmd_linear
from cdar.experiments import sweep, train_transfer, windowed
from cdar.tnnar import checkpoint
from cdar.tnnar.gradcheck import check_layers, check_losses, check_network
from cdar.tnnar.network import init_network
from cdar.ussar import CadConfig, brute_force_select, select_sources

SEEDS = range(5)
RESULTS: list[str] = []

pytestmark = pytest.mark.acceptance


def record(n: int, name: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {n}: {name} -- {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def ladder_windows(seed):
    return [window(d, suites.WINDOW, suites.STRIDE) for d in synth_generate(suites.ladder_spec(seed))]


def test_c1_gradient_suite():
    t0 = time.perf_counter()
    worst_layer = worst_loss = worst_net = 0.0
    for seed in range(10):
        worst_layer = max(worst_layer, *check_layers(seed).values())
        worst_loss = max(worst_loss, *check_losses(seed).values())
        worst_net = max(worst_net, *check_network(seed).values())
    dt = time.perf_counter() - t0
    ok = worst_layer < 1e-4 and worst_net < 1e-4 and worst_loss < 1e-6 and dt < 60
    record(1, "gradient suite", ok,
           f"max rel err layers {worst_layer:.2e}, network {worst_net:.2e}, losses "
           f"{worst_loss:.2e} over 10 seeds in {dt:.1f}s")


def test_c2_mmd_oracle():
    r = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(50):
        n, m, d = r.integers(1, 65), r.integers(1, 65), r.integers(1, 129)
        X = r.normal(size=(n, d)) * r.uniform(0.1, 3)
        Y = r.normal(size=(m, d)) + r.normal(size=d)
        quad = (X @ X.T).mean() + (Y @ Y.T).mean() - 2 * (X @ Y.T).mean()
        worst = max(worst, abs(mmd_linear(X, Y) - quad))
    record(2, "MMD oracle", worst < 1e-9, f"max |linear - quadratic| = {worst:.2e} over 50 pairs")


def test_c3_ladder():
    increasing, self_min, rows = [], [], []
    for seed in SEEDS:
        ws = ladder_windows(seed)
        probe, kin = ProbeConfig(seed=seed), KineticConfig(seed=seed)
        h1, h2 = split(ws[0], 0.5, seed)
        self_cad = cad(h1, h2, probe=probe, kinetic=kin).combined
        levels = [cad(ws[0], w, probe=probe, kinetic=kin).combined for w in ws[1:]]
        increasing.append(all(a < b for a, b in zip(levels, levels[1:])))
        self_min.append(self_cad < min(levels))
        rows.append(f"{self_cad:.2f}|" + ",".join(f"{v:.2f}" for v in levels))
    ok = all(increasing) and all(self_min)
    record(3, "distance ladder", ok,
           f"strictly increasing {sum(increasing)}/5, self-CAD minimal {sum(self_min)}/5; "
           f"self|levels per seed: {'; '.join(rows)}")


def test_c4_a_distance_endpoints():
    same, apart = [], []
    for seed in SEEDS:
        r = np.random.default_rng(seed)
        A = WindowSet(r.normal(size=(400, 8, 3)), None, "A")
        B = WindowSet(r.normal(size=(400, 8, 3)), None, "B")
        C = WindowSet(r.normal(size=(400, 8, 3)) + 1.5, None, "C")
        same.append(a_distance(A, B, ProbeConfig(seed=seed)))
        apart.append(a_distance(A, C, ProbeConfig(seed=seed)))
    ok = max(same) < 0.3 and min(apart) > 1.8
    record(4, "A-distance endpoints", ok,
           f"identical max {max(same):.3f} (< 0.3), separated min {min(apart):.3f} (> 1.8)")


def test_c5_ussar_vs_oracle():
    t0 = time.perf_counter()
    hits = {1: 0, 2: 0, 3: 0}
    gaps = {1: [], 2: [], 3: []}
    for seed in SEEDS:
        ws = [window(d, suites.WINDOW, suites.STRIDE)
              for d in synth_generate(suites.selection_suite(seed))]
        target, sources = ws[0], ws[1:]
        for k in (1, 2, 3):
            res = select_sources(target, sources, k, cfg=CadConfig.seeded(seed))
            bf = brute_force_select(target, sources, k)
            acc = dict(bf.table)[tuple(sorted(res.selected))]
            gap = 100 * (bf.best_accuracy - acc)
            gaps[k].append(round(gap, 2))
            hits[k] += gap <= 2.0
    dt = time.perf_counter() - t0
    ok = all(h >= 4 for h in hits.values()) and dt < 300
    record(5, "USSAR vs exhaustive oracle", ok,
           f"within 2 points: K=1 {hits[1]}/5, K=2 {hits[2]}/5, K=3 {hits[3]}/5; "
           f"gaps {gaps}; {dt:.0f}s")


def test_c6_adaptation_benefit():
    arch = suites.desk_arch()
    gains, slowest = [], 0.0
    for seed in SEEDS:
        raw = windowed(synth_generate(suites.adaptation_task(seed)), suites.WINDOW, suites.STRIDE)
        accs = {}
        for mu in (0.0, 0.5):
            t0 = time.perf_counter()
            accs[mu] = train_transfer(raw, "target", ["source"], arch, suites.desk_train(mu, seed)).accuracy
            slowest = max(slowest, time.perf_counter() - t0)
        gains.append(100 * (accs[0.5] - accs[0.0]))
    gain = statistics.fmean(gains)

    multi_gain = []
    names = ["right_arm", "left_leg", "right_leg", "left_arm", "chest"]
    for seed in SEEDS:
        raw = windowed(synth_generate(suites.transfer_suite(seed)), suites.WINDOW, suites.STRIDE)
        sel = select_sources(raw["torso"], [raw[n] for n in names], 3, cfg=CadConfig.seeded(seed))
        cfg = suites.desk_train(0.5, seed)
        single = train_transfer(raw, "torso", sel.selected[:1], arch, cfg).accuracy
        multi = train_transfer(raw, "torso", sel.selected, arch, cfg).accuracy
        multi_gain.append(100 * (multi - single))
    mg = statistics.fmean(multi_gain)
    ok = gain >= 5 and slowest < 180 and mg >= 2
    record(6, "adaptation benefit", ok,
           f"mu=0.5 minus mu=0: mean {gain:+.1f} points {np.round(gains, 1).tolist()}, slowest run "
           f"{slowest:.0f}s; K=3 minus best single source: mean {mg:+.1f} points "
           f"{np.round(multi_gain, 1).tolist()}")


def test_c7_sensitivity_sweep():
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    names = ["right_arm", "left_leg", "right_leg", "left_arm", "chest"]
    raw = {s: windowed(synth_generate(suites.transfer_suite(s)), suites.WINDOW, suites.STRIDE)
           for s in range(3)}
    cells = sweep(raw, "torso", names, 3, grid, grid, suites.desk_arch(), suites.desk_train())
    means = [c.mean for c in cells]
    spread = 100 * (max(means) - min(means))
    ok = len(cells) == 25 and not any(c.error for c in cells) and spread < 10
    record(7, "lambda/mu sensitivity", ok,
           f"25 cells x 3 seeds, mean accuracy {100 * min(means):.1f}..{100 * max(means):.1f}, "
           f"max-min {spread:.2f} points")


def _tree_hash(folder):
    return {p.relative_to(folder).as_posix(): hashlib.sha256(p.read_bytes()).hexdigest()
            for p in sorted(folder.rglob("*")) if p.is_file() and p.name != "timings.json"}


def test_c8_cli_determinism(tmp_path):
    def run_all(root):
        data = root / "data"
        assert main(["synth", "--suite", "transfer", "--seed", "1", "--out", str(data)]) == 0
        cfg = {"manifest": str(data / "manifest.json"), "weights": str(data / "weights.json"),
               "target": "torso", "k": 2, "window": 64, "stride": 32, "seeds": [0, 1],
               "arch": {"conv": [{"kernel_len": 8, "depth": 4, "pool_len": 4, "pool_stride": 4},
                                 {"kernel_len": 4, "depth": 4, "pool_len": 2, "pool_stride": 2}],
                        "lstm_hidden": 8, "fc1_width": 16},
               "train": {"learning_rate": 0.05, "epochs": 2},
               "lambda_grid": [0.0, 1.0], "mu_grid": [0.5]}
        (root / "exp.json").write_text(json.dumps(cfg))
        c = str(root / "exp.json")
        assert main(["distance", "--config", c, "--out", str(root / "distance")]) == 0
        assert main(["select", "--config", c, "--out", str(root / "select")]) == 0
        assert main(["train", "--config", c, "--selection", str(root / "select" / "selection.json"),
                     "--out", str(root / "train")]) == 0
        assert main(["sweep", "--config", c, "--out", str(root / "sweep")]) == 0
        return {k: v for k, v in _tree_hash(root).items() if k != "exp.json"}

    # identical config files in both trees, so inputs are hashed at the same paths
    (tmp_path / "run").mkdir()
    first = run_all(tmp_path / "run")
    moved = tmp_path / "first"
    (tmp_path / "run").rename(moved)
    (tmp_path / "run").mkdir()
    second = run_all(tmp_path / "run")
    differ = sorted(k for k in first if first[k] != second.get(k))
    kinds = sorted({k.rsplit(".", 1)[-1] for k in first})
    ok = first.keys() == second.keys() and not differ
    record(8, "CLI determinism", ok,
           f"{len(first)} files ({', '.join(kinds)}) hashed across two full runs; differing: {differ}")


def test_c9_round_trips(tmp_path):
    arch = suites.desk_arch()
    params = init_network(arch, 11)
    checkpoint.save(tmp_path / "m.ckpt", params, arch)
    back, arch2 = checkpoint.load(tmp_path / "m.ckpt")
    ckpt_ok = arch2 == arch and all(params[k].tobytes() == back[k].tobytes() for k in params)

    spec = suites.transfer_suite(5)
    assert main(["synth", "--suite", "transfer", "--seed", "5", "--out", str(tmp_path / "d")]) == 0
    loaded = load_manifest(tmp_path / "d" / "manifest.json")
    synth_ok = all(np.array_equal(loaded[d.name].series, d.series)
                   and np.array_equal(loaded[d.name].labels, d.labels) for d in synth_generate(spec))
    record(9, "round trips", ckpt_ok and synth_ok,
           f"checkpoint bit-exact: {ckpt_ok}; synth emit/ingest bit-exact: {synth_ok}")
