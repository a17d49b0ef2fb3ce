"""End-to-end transfer runs shared by the CLI and the experiment scripts."""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace

from .data import ActivityDomain, WindowSet, normalize_zscore, window
from .distance import SemanticWeights, pool_domains
from .tnnar.network import ArchConfig, EpochRecord, TrainConfig, fit, init_network
from .ussar import CadConfig, SelectionResult, select_sources


def windowed(domains: list[ActivityDomain], win_len: int, stride: int) -> dict[str, WindowSet]:
    return {d.name: window(d, win_len, stride) for d in domains}


def prepare_transfer(raw: dict[str, WindowSet], target: str, sources: list[str],
                     reuse_source_stats: bool = False) -> tuple[WindowSet, WindowSet]:
    """Normalize each domain on its own statistics and pool the sources.

    With ``reuse_source_stats`` the target is scaled with the pooled source
    statistics instead of its own.
    """
    normed = [normalize_zscore(raw[s]) for s in sources]
    src = pool_domains(normed)
    if reuse_source_stats:
        stats = normalize_zscore(pool_domains([raw[s] for s in sources])).norm_stats
        tgt = normalize_zscore(raw[target], stats)
    else:
        tgt = normalize_zscore(raw[target])
    return src, tgt


@dataclass
class TransferRun:
    sources: list[str]
    mu: float
    seed: int
    accuracy: float
    history: list[EpochRecord]
    params: dict = field(repr=False, default_factory=dict)


def train_transfer(raw: dict[str, WindowSet], target: str, sources: list[str],
                   arch: ArchConfig, cfg: TrainConfig, reuse_source_stats: bool = False) -> TransferRun:
    src, tgt = prepare_transfer(raw, target, sources, reuse_source_stats)
    params = init_network(arch, cfg.seed)
    # target labels, when present, are only read for the logged accuracy
    params, history = fit(params, arch, src, tgt, cfg, target_eval=tgt)
    acc = history[-1].target_accuracy if history else float("nan")
    return TransferRun(list(sources), cfg.mu, cfg.seed, acc, history, params)


def select(raw: dict[str, WindowSet], target: str, sources: list[str], k: int, lam: float,
           seed: int, sw: SemanticWeights | None = None) -> SelectionResult:
    return select_sources(raw[target], [raw[s] for s in sources], k, lam, sw,
                          CadConfig.seeded(seed, lam))


@dataclass
class SweepCell:
    lam: float
    mu: float
    accuracies: list[float]
    selections: list[list[str]]
    error: str | None = None

    @property
    def mean(self) -> float:
        return statistics.fmean(self.accuracies) if self.accuracies else float("nan")

    @property
    def std(self) -> float:
        return statistics.pstdev(self.accuracies) if len(self.accuracies) > 1 else 0.0

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "mu": self.mu, "accuracies": list(self.accuracies),
                "selections": [list(s) for s in self.selections], "error": self.error}

    @classmethod
    def from_dict(cls, d: dict) -> "SweepCell":
        return cls(d["lambda"], d["mu"], list(d["accuracies"]), [list(s) for s in d["selections"]],
                   d.get("error"))


class CellRunner:
    """Runs sweep cells one at a time.

    A cell's result depends only on its (lambda, mu) and the seed list, so
    cells can run in any order or be skipped and resumed later. Selections
    and training runs shared between cells are memoized.
    """

    def __init__(self, raw_by_seed: dict[int, dict[str, WindowSet]], target: str, sources: list[str],
                 k: int, arch: ArchConfig, base: TrainConfig, sw: SemanticWeights | None = None):
        self.raw_by_seed = raw_by_seed
        self.target, self.sources, self.k = target, list(sources), k
        self.arch, self.base, self.sw = arch, base, sw
        self._sel: dict[tuple, list[str]] = {}
        self._acc: dict[tuple, float] = {}

    def selection(self, lam: float, seed: int) -> list[str]:
        key = (lam, seed)
        if key not in self._sel:
            res = select(self.raw_by_seed[seed], self.target, self.sources, self.k, lam, seed, self.sw)
            self._sel[key] = res.selected
        return self._sel[key]

    def accuracy(self, chosen: list[str], mu: float, seed: int) -> float:
        key = (tuple(chosen), mu, seed)
        if key not in self._acc:
            cfg = replace(self.base, mu=mu, seed=seed)
            self._acc[key] = train_transfer(self.raw_by_seed[seed], self.target, chosen,
                                            self.arch, cfg).accuracy
        return self._acc[key]

    def run(self, lam: float, mu: float) -> SweepCell:
        accs, sels = [], []
        try:
            for seed in self.raw_by_seed:
                chosen = self.selection(lam, seed)
                sels.append(chosen)
                accs.append(self.accuracy(chosen, mu, seed))
        except (ValueError, FloatingPointError) as exc:
            return SweepCell(lam, mu, accs, sels, f"{type(exc).__name__}: {exc}")
        return SweepCell(lam, mu, accs, sels)


def sweep(raw_by_seed: dict[int, dict[str, WindowSet]], target: str, sources: list[str], k: int,
          lambdas: list[float], mus: list[float], arch: ArchConfig, base: TrainConfig,
          sw: SemanticWeights | None = None, on_cell=None) -> list[SweepCell]:
    """Selection with every lambda, then training with every mu, per seed."""
    runner = CellRunner(raw_by_seed, target, sources, k, arch, base, sw)
    cells = []
    for lam in lambdas:
        for mu in mus:
            cell = runner.run(lam, mu)
            cells.append(cell)
            if on_cell is not None:
                on_cell(cell)
    return cells
