"""Greedy unsupervised source selection, and an exhaustive oracle to check it."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import WindowSet
from .distance import (DEFAULT_LAMBDA, CadScore, KineticConfig, ProbeConfig, SemanticWeights,
                       cad, pool_domains)
from .linear import SoftmaxClassifier


class SelectionError(ValueError):
    pass


@dataclass
class CadConfig:
    lam: float = DEFAULT_LAMBDA
    probe: ProbeConfig = field(default_factory=ProbeConfig)
    kinetic: KineticConfig = field(default_factory=KineticConfig)

    @classmethod
    def seeded(cls, seed: int, lam: float = DEFAULT_LAMBDA) -> "CadConfig":
        return cls(lam, ProbeConfig(seed=seed), KineticConfig(seed=seed))


@dataclass
class Decision:
    candidate: str
    d_set: float | None  # CAD between the pooled selection and the candidate
    d_target: float
    accepted: bool
    fallback: bool = False


@dataclass
class SelectionResult:
    target: str
    k: int
    selected: list[str]
    ranked: list[CadScore]
    decisions: list[Decision]
    excluded: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "K": self.k,
            "selected": list(self.selected),
            "ranked": [s.to_dict() for s in self.ranked],
            "decisions": [d.__dict__ for d in self.decisions],
            "excluded": dict(self.excluded),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def rank_sources(target: WindowSet, sources: list[WindowSet], lam: float = DEFAULT_LAMBDA,
                 sw: SemanticWeights | None = None, cfg: CadConfig | None = None,
                 excluded: dict | None = None) -> list[CadScore]:
    """CAD of every source to the target, ascending, ties broken by name.

    A source whose distance cannot be computed is left out; its reason goes
    into ``excluded`` when a dict is passed.
    """
    if not sources:
        raise SelectionError("at least one source domain is required")
    cfg = cfg or CadConfig()
    scores = []
    for src in sources:
        try:
            s = cad(target, src, lam, sw, cfg.probe, cfg.kinetic)
        except (ValueError, KeyError) as exc:
            if excluded is not None:
                excluded[src.source_domain] = f"{type(exc).__name__}: {exc}"
            continue
        scores.append(s)
    return sorted(scores, key=lambda s: (s.combined, s.pair[1]))


def select_sources(target: WindowSet, sources: list[WindowSet], k: int,
                   lam: float = DEFAULT_LAMBDA, sw: SemanticWeights | None = None,
                   cfg: CadConfig | None = None) -> SelectionResult:
    """Pick ``k`` sources for ``target``.

    The closest source seeds the set. Remaining sources are visited by
    increasing CAD to the target and kept when they sit closer to the pooled
    selection than to the target. If the visit runs out before ``k`` are
    kept, rejected candidates fill the gap in CAD order, marked ``fallback``.
    """
    if not 1 <= k <= len(sources):
        raise SelectionError(f"K must lie in [1, {len(sources)}], got {k}")
    cfg = cfg or CadConfig()
    by_name = {s.source_domain: s for s in sources}
    if len(by_name) != len(sources):
        raise SelectionError("source domain names must be unique")
    excluded: dict[str, str] = {}
    ranked = rank_sources(target, sources, lam, sw, cfg, excluded)
    if len(ranked) < k:
        raise SelectionError(f"only {len(ranked)} usable sources for K={k}: {excluded}")
    selected = [ranked[0].pair[1]]
    decisions = []
    rejected = []
    for score in ranked[1:]:
        if len(selected) == k:
            break
        name = score.pair[1]
        pooled = pool_domains([by_name[n] for n in selected])
        d_set = cad(pooled, by_name[name], lam, sw, cfg.probe, cfg.kinetic).combined
        ok = d_set < score.combined
        decisions.append(Decision(name, d_set, score.combined, ok))
        if ok:
            selected.append(name)
        else:
            rejected.append(score)
    for score in rejected[:k - len(selected)]:
        selected.append(score.pair[1])
        decisions.append(Decision(score.pair[1], None, score.combined, True, fallback=True))
    return SelectionResult(target.source_domain, k, selected, ranked, decisions, excluded)


# -------------------------------------------------------------- evaluation


@dataclass
class EvalConfig:
    """The fixed linear classifier used to score a choice of sources."""

    n_fft: int = 8
    l2: float = 1e-2
    iters: int = 300
    max_subsets: int = 5000


def window_features(ws: WindowSet, n_fft: int = 8) -> np.ndarray:
    """Per-channel mean, standard deviation and low-frequency FFT magnitudes."""
    x = ws.windows
    mean = x.mean(axis=1)
    std = x.std(axis=1)
    spec = np.abs(np.fft.rfft(x - mean[:, None, :], axis=1))[:, 1:n_fft + 1, :]
    spec = spec / x.shape[1]
    return np.concatenate([mean, std, spec.reshape(len(x), -1)], axis=1)


def subset_accuracy(target: WindowSet, chosen: list[WindowSet], cfg: EvalConfig | None = None,
                    n_classes: int | None = None) -> float:
    """Train the fixed classifier on the pooled sources, score it on the labeled target."""
    cfg = cfg or EvalConfig()
    pooled = pool_domains(chosen)
    if pooled.labels is None or target.labels is None:
        raise SelectionError("source and target labels are needed for evaluation")
    k = n_classes or int(max(pooled.labels.max(), target.labels.max())) + 1
    clf = SoftmaxClassifier(cfg.l2, cfg.iters).fit(window_features(pooled, cfg.n_fft),
                                                   pooled.labels, k)
    return clf.score(window_features(target, cfg.n_fft), target.labels)


@dataclass
class BruteForceResult:
    best: tuple[str, ...]
    best_accuracy: float
    table: list[tuple[tuple[str, ...], float]]


def brute_force_select(target: WindowSet, sources: list[WindowSet], k: int,
                       cfg: EvalConfig | None = None) -> BruteForceResult:
    """Score every ``k``-subset of sources on the labeled target. Test-only oracle."""
    cfg = cfg or EvalConfig()
    if not 1 <= k <= len(sources):
        raise SelectionError(f"K must lie in [1, {len(sources)}], got {k}")
    n_sub = math.comb(len(sources), k)
    if n_sub > cfg.max_subsets:
        raise SelectionError(f"C({len(sources)},{k}) = {n_sub} subsets exceeds the cap of "
                             f"{cfg.max_subsets}; reduce M or K")
    n_classes = int(max(max(s.labels.max() for s in sources), target.labels.max())) + 1
    table = []
    for combo in itertools.combinations(sorted(sources, key=lambda s: s.source_domain), k):
        acc = subset_accuracy(target, list(combo), cfg, n_classes)
        table.append((tuple(s.source_domain for s in combo), acc))
    best = max(table, key=lambda r: r[1])
    return BruteForceResult(best[0], best[1], table)
