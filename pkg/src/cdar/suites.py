"""Canonical synthetic scenarios and desk-scale network settings.

These are the fixed setups the experiment scripts and the acceptance suite
run on. Each returns a ``SynthSpec`` for a given seed; the first domain is
always the target.
"""

from __future__ import annotations

from .data import DomainTransform, SynthSpec
from .tnnar.network import ArchConfig, ConvSpec, TrainConfig

WINDOW = 64
STRIDE = 32
JITTER = 0.25

# accelerometer (gravity), gyroscope (none), magnetometer (earth field)
SENSOR_BASELINE = [0.1, 0.2, 1.0, 0.0, 0.0, 0.0, 0.4, -0.2, 0.5]

LADDER_ROTATIONS = (0.1, 0.2, 0.35, 0.5, 0.7)


def swapped(*pairs: tuple[int, int], channels: int = 9) -> list[int]:
    perm = list(range(channels))
    for a, b in pairs:
        perm[a], perm[b] = perm[b], perm[a]
    return perm


def ladder_spec(seed: int, segments_per_class: int = 16) -> SynthSpec:
    """A base domain and five copies shifted by growing rotation and scale."""
    doms = [DomainTransform("base", noise=0.1)]
    for i, rot in enumerate(LADDER_ROTATIONS, start=1):
        doms.append(DomainTransform(f"level{i}", rotation=rot, scale=1.0 + 0.1 * i, noise=0.1))
    nearest = {"base": "level1"}
    return SynthSpec(doms, n_classes=3, window_len=WINDOW, segments_per_class=segments_per_class,
                     posture_jitter=JITTER, baseline_vector=SENSOR_BASELINE, nearest=nearest,
                     seed=seed)


def selection_suite(seed: int) -> SynthSpec:
    """Target plus six sources for checking greedy selection against brute force."""
    nz = 0.3
    doms = [
        DomainTransform("target", noise=nz),
        DomainTransform("s1", rotation=0.375, scale=1.05, noise=nz),
        DomainTransform("s2", rotation=0.75, scale=1.1, noise=nz),
        DomainTransform("s3", rotation=-0.9, scale=0.9, noise=1.5 * nz),
        DomainTransform("s4", rotation=1.35, scale=1.3, noise=nz),
        DomainTransform("s5", rotation=-1.8, noise=2 * nz),
        DomainTransform("s6", rotation=2.4, scale=1.5, noise=nz, permutation=swapped((0, 1))),
    ]
    return SynthSpec(doms, n_classes=4, window_len=WINDOW, posture_jitter=JITTER,
                     baseline_vector=SENSOR_BASELINE, nearest={"target": "s1"}, seed=seed)


def adaptation_task(seed: int) -> SynthSpec:
    """One labeled source and a target rotated well away from it."""
    doms = [
        DomainTransform("target", rotation=1.2, scale=1.3, noise=0.1),
        DomainTransform("source", noise=0.05),
    ]
    return SynthSpec(doms, n_classes=3, window_len=WINDOW, baseline_vector=SENSOR_BASELINE,
                     seed=seed)


def transfer_suite(seed: int) -> SynthSpec:
    """Target and five body-position sources.

    The three nearest sources each swap a different channel pair, so no single
    one matches the target but together they cover it; the other two are far.
    """
    doms = [
        DomainTransform("torso", noise=0.1),
        DomainTransform("right_arm", scale=1.3, noise=0.1, permutation=swapped((3, 4))),
        DomainTransform("left_leg", scale=0.9, noise=0.1, permutation=swapped((4, 5))),
        DomainTransform("right_leg", noise=0.12, permutation=swapped((3, 5))),
        DomainTransform("left_arm", rotation=1.2, noise=0.1, permutation=swapped((3, 4))),
        DomainTransform("chest", rotation=-1.4, scale=1.2, noise=0.2),
    ]
    return SynthSpec(doms, n_classes=3, window_len=WINDOW, posture_jitter=JITTER,
                     baseline_vector=SENSOR_BASELINE, seed=seed)


def desk_arch(n_classes: int = 3, channels: int = 9) -> ArchConfig:
    return ArchConfig(channels=channels, window=WINDOW,
                      conv=[ConvSpec(8, 8, 4, 4), ConvSpec(4, 8, 2, 2)],
                      lstm_hidden=32, fc1_width=64, n_classes=n_classes, keep_prob=0.8)


def desk_train(mu: float = 0.5, seed: int = 0, epochs: int = 20) -> TrainConfig:
    return TrainConfig(learning_rate=0.05, batch_source=64, batch_target=64, mu=mu,
                       epochs=epochs, seed=seed, eval_every=epochs)


SUITES = {
    "ladder": ladder_spec,
    "selection": selection_suite,
    "adaptation": adaptation_task,
    "transfer": transfer_suite,
}
