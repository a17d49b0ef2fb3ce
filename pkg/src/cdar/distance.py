"""Domain distances: A-distance probe, weighted kinetic cosine, CAD and MMD."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .data import InsufficientDataError, SchemaError, WindowSet
from .linear import Standardizer, fit_logistic, predict_logistic
from .numeric import DimensionError, Rng, Tensor, as_tensor

MIN_PROBE_WINDOWS = 5
DEFAULT_LAMBDA = 0.5


class UndefinedDistanceError(ValueError):
    pass


@dataclass
class SemanticWeights:
    """Hand-assigned relatedness of each source to one target.

    The target itself always carries weight 1; source weights must sum to 1.
    """

    target: str
    weights: dict[str, float]

    def __post_init__(self):
        for name, w in self.weights.items():
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"weight for {name!r} must lie in [0, 1], got {w}")
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"source weights must sum to 1, got {total!r}")

    def weight_of(self, ws: WindowSet) -> float:
        names = ws.provenance or [ws.source_domain]
        counts: dict[str, int] = {}
        for n in names:
            counts[n] = counts.get(n, 0) + 1
        # size-weighted average over the members of a pooled set
        tot = sum(counts.values())
        return sum(self._one(n) * c for n, c in counts.items()) / tot

    def _one(self, name: str) -> float:
        if name == self.target:
            return 1.0
        if name not in self.weights:
            raise KeyError(f"no semantic weight for domain {name!r}")
        return self.weights[name]

    @classmethod
    def uniform(cls, target: str, sources: list[str]) -> "SemanticWeights":
        w = 1.0 / len(sources)
        weights = {s: w for s in sources}
        # absorb rounding so the sum is exactly representable as 1 within tolerance
        weights[sources[-1]] = 1.0 - w * (len(sources) - 1)
        return cls(target, weights)

    @classmethod
    def load(cls, path) -> "SemanticWeights":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(doc["target"], {k: float(v) for k, v in doc["weights"].items()})

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps({"target": self.target, "weights": self.weights},
                                         indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- A-distance


@dataclass
class ProbeConfig:
    holdout: float = 0.2
    # number of disjoint held-out folds; 1 is a single train/eval split
    folds: int = 5
    l2: float = 1e-2
    iters: int = 200
    # report training error, as when predicting on the very data the probe saw
    training_error: bool = False
    seed: int = 0


@dataclass
class ProbeResult:
    weights: Tensor
    bias: float
    epsilon: float
    n_eval: int
    fold_errors: list[float] = field(default_factory=list)


def _fold_indices(n: int, cfg: ProbeConfig, rng: Rng) -> list[np.ndarray]:
    perm = rng.permutation(n)
    n_eval = max(1, int(round(cfg.holdout * n)))
    if cfg.folds <= 1:
        return [perm[:n_eval]]
    # disjoint held-out blocks; all blocks together cover the data once
    return [b for b in np.array_split(perm, max(cfg.folds, 2)) if len(b)]


def train_linear_probe(A: WindowSet, B: WindowSet, cfg: ProbeConfig | None = None) -> ProbeResult:
    """Fit a linear classifier telling A (+1) from B (-1) and measure its error."""
    cfg = cfg or ProbeConfig()
    if B.source_domain < A.source_domain:
        # fit on the name-ordered pair so that swapping A and B only flips the sign
        r = train_linear_probe(B, A, cfg)
        return ProbeResult(-r.weights, -r.bias, r.epsilon, r.n_eval, r.fold_errors)
    for ws in (A, B):
        if len(ws) < MIN_PROBE_WINDOWS:
            raise InsufficientDataError(
                f"domain {ws.source_domain!r} has {len(ws)} windows; the probe needs "
                f">= {MIN_PROBE_WINDOWS}")
    XA, XB = A.features(), B.features()
    if XA.shape[1] != XB.shape[1]:
        raise DimensionError(f"feature width mismatch: {XA.shape[1]} vs {XB.shape[1]}")
    X = np.concatenate([XA, XB])
    y = np.concatenate([np.ones(len(XA)), -np.ones(len(XB))])
    rng = Rng(cfg.seed).fork(f"probe/{A.source_domain}|{B.source_domain}")

    def fit(idx):
        scaler = Standardizer.fit(X[idx])
        yy = y[idx]
        n_pos = max((yy > 0).sum(), 1)
        n_neg = max((yy < 0).sum(), 1)
        sw = np.where(yy > 0, 0.5 / n_pos, 0.5 / n_neg)
        w, b = fit_logistic(scaler(X[idx]), yy, sw, cfg.l2, cfg.iters)
        # fold the standardization into the returned weights
        w_raw = w / scaler.std
        return w_raw, b - float(w_raw @ scaler.mean)

    def balanced_error(idx, w, b):
        wrong = predict_logistic(X[idx], w, b) != y[idx]
        yy = y[idx]
        errs = [wrong[yy == s].mean() for s in (1, -1) if (yy == s).any()]
        return float(np.mean(errs))

    if cfg.training_error:
        idx = np.arange(len(X))
        w, b = fit(idx)
        eps = balanced_error(idx, w, b)
        return ProbeResult(w, b, eps, len(X), [eps])

    everything = np.arange(len(X))
    errors, n_eval, first = [], 0, None
    for held in _fold_indices(len(X), cfg, rng):
        train = np.setdiff1d(everything, held, assume_unique=True)
        w, b = fit(train)
        if first is None:
            first = (w, b)
        errors.append(balanced_error(held, w, b))
        n_eval += len(held)
    eps = float(np.mean(errors))
    return ProbeResult(first[0], first[1], eps, n_eval, errors)


def a_distance_from_error(eps: float) -> float:
    return 2.0 * (1.0 - 2.0 * min(max(eps, 0.0), 0.5))


def a_distance(A: WindowSet, B: WindowSet, cfg: ProbeConfig | None = None) -> float:
    return a_distance_from_error(train_linear_probe(A, B, cfg).epsilon)


# ----------------------------------------------------------- kinetic cosine


@dataclass
class KineticConfig:
    # number of sampled (a, b) pairs; None means min(|A|, |B|)
    pairs: int | None = None
    # pair window i of A with window i of B instead of sampling
    index_pairing: bool = False
    seed: int = 0


@dataclass
class KineticResult:
    cosine: float
    n_pairs: int
    skipped: int


def kinetic_cosine(A: WindowSet, B: WindowSet, sw: SemanticWeights | None = None,
                   cfg: KineticConfig | None = None) -> float:
    return kinetic_cosine_detail(A, B, sw, cfg).cosine


def kinetic_cosine_detail(A: WindowSet, B: WindowSet, sw: SemanticWeights | None = None,
                          cfg: KineticConfig | None = None) -> KineticResult:
    cfg = cfg or KineticConfig()
    XA, XB = A.features(), B.features()
    if XA.shape[1] != XB.shape[1]:
        raise DimensionError(f"feature width mismatch: {XA.shape[1]} vs {XB.shape[1]}")
    wa = 1.0 if sw is None else sw.weight_of(A)
    wb = 1.0 if sw is None else sw.weight_of(B)
    n = min(len(XA), len(XB))
    if cfg.index_pairing:
        ia = ib = np.arange(n)
    else:
        k = n if cfg.pairs is None else min(cfg.pairs, n)
        # keyed on the unordered pair so that cos(A, B) == cos(B, A)
        swap = B.source_domain < A.source_domain
        lo, hi = (B, A) if swap else (A, B)
        rng = Rng(cfg.seed).fork(f"kinetic/{lo.source_domain}|{hi.source_domain}")
        i_lo = rng.permutation(len(lo))[:k]
        i_hi = rng.permutation(len(hi))[:k]
        ia, ib = (i_hi, i_lo) if swap else (i_lo, i_hi)
    U, V = wa * XA[ia], wb * XB[ib]
    nu, nv = np.linalg.norm(U, axis=1), np.linalg.norm(V, axis=1)
    ok = (nu > 0) & (nv > 0)
    if not ok.any():
        raise UndefinedDistanceError(
            f"every sampled pair between {A.source_domain!r} and {B.source_domain!r} "
            "has a zero-norm vector")
    cos = np.einsum("ij,ij->i", U[ok], V[ok]) / (nu[ok] * nv[ok])
    cos = np.clip(cos, -1.0, 1.0)
    return KineticResult(float(cos.mean()), int(ok.sum()), int((~ok).sum()))


# ----------------------------------------------------------------------- CAD


@dataclass
class CadScore:
    pair: tuple[str, str]
    general: float
    specific: float  # 1 - weighted cosine
    lam: float
    combined: float
    cosine: float  # raw weighted kinetic cosine
    epsilon: float

    @property
    def cosine_form(self) -> float:
        """General term plus lambda times the raw cosine similarity."""
        return self.general + self.lam * self.cosine

    def to_dict(self) -> dict:
        return {
            "pair": list(self.pair),
            "general": self.general,
            "specific": self.specific,
            "lambda": self.lam,
            "combined": self.combined,
            "cosine": self.cosine,
            "epsilon": self.epsilon,
        }


def cad(A: WindowSet, B: WindowSet, lam: float = DEFAULT_LAMBDA,
        sw: SemanticWeights | None = None, probe: ProbeConfig | None = None,
        kinetic: KineticConfig | None = None) -> CadScore:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    eps = train_linear_probe(A, B, probe).epsilon
    general = a_distance_from_error(eps)
    cosine = kinetic_cosine(A, B, sw, kinetic)
    specific = 1.0 - cosine
    return CadScore((A.source_domain, B.source_domain), general, specific, lam,
                    general + lam * specific, cosine, eps)


# ----------------------------------------------------------------------- MMD


def _check_pair(Xs: Tensor, Xt: Tensor) -> tuple[Tensor, Tensor]:
    Xs, Xt = as_tensor(Xs), as_tensor(Xt)
    if Xs.ndim != 2 or Xt.ndim != 2 or Xs.shape[1] != Xt.shape[1]:
        raise DimensionError(f"MMD inputs must be n x d and m x d, got {Xs.shape}, {Xt.shape}")
    if len(Xs) < 1 or len(Xt) < 1:
        raise DimensionError("MMD needs at least one sample per side")
    return Xs, Xt


def mmd_linear(Xs: Tensor, Xt: Tensor) -> float:
    """Squared distance between the sample means (linear-kernel MMD)."""
    Xs, Xt = _check_pair(Xs, Xt)
    delta = Xs.mean(axis=0) - Xt.mean(axis=0)
    return float(delta @ delta)


def mmd_linear_time(Xs: Tensor, Xt: Tensor) -> float:
    """Unbiased linear-time MMD estimate with a linear kernel.

    Consecutive samples are consumed in pairs (x1, x2), (y1, y2); each pair
    contributes k(x1,x2) + k(y1,y2) - k(x1,y2) - k(x2,y1).
    """
    Xs, Xt = _check_pair(Xs, Xt)
    m = min(len(Xs), len(Xt)) // 2
    if m < 1:
        raise DimensionError("linear-time MMD needs at least two samples per side")
    x1, x2 = Xs[0:2 * m:2], Xs[1:2 * m:2]
    y1, y2 = Xt[0:2 * m:2], Xt[1:2 * m:2]
    h = (np.einsum("ij,ij->i", x1, x2) + np.einsum("ij,ij->i", y1, y2)
         - np.einsum("ij,ij->i", x1, y2) - np.einsum("ij,ij->i", x2, y1))
    return float(h.mean())


def pool_domains(domains: list[WindowSet]) -> WindowSet:
    if not domains:
        raise ValueError("nothing to pool")
    shape = domains[0].windows.shape[1:]
    for ws in domains:
        if ws.windows.shape[1:] != shape:
            raise SchemaError(f"cannot pool windows of shape {ws.windows.shape[1:]} with {shape}")
    if len(domains) == 1:
        d = domains[0]
        return WindowSet(d.windows, d.labels, d.source_domain, d.norm_stats, list(d.provenance))
    labels = None
    if all(ws.labels is not None for ws in domains):
        labels = np.concatenate([ws.labels for ws in domains])
    prov = [p for ws in domains for p in ws.provenance]
    return WindowSet(np.concatenate([ws.windows for ws in domains]), labels,
                     "+".join(ws.source_domain for ws in domains), None, prov)
