"""Activity domains, CSV ingestion, window segmentation and synthetic domains."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numeric import Rng, Tensor, as_tensor

DEFAULT_WINDOW = 128
DEFAULT_STRIDE = 64


class SchemaError(ValueError):
    pass


class EmptyDomainError(ValueError):
    pass


class InsufficientDataError(ValueError):
    pass


class SpecError(ValueError):
    pass


class ConstantChannelWarning(UserWarning):
    pass


@dataclass
class ActivityDomain:
    name: str
    series: Tensor  # T x C
    labels: np.ndarray | None = None  # length T, int
    channel_names: list[str] = field(default_factory=list)
    sample_rate: float = 50.0

    def __post_init__(self):
        self.series = as_tensor(self.series)
        if self.series.ndim != 2:
            raise SchemaError(f"series must be T x C, got shape {self.series.shape}")
        if not self.channel_names:
            self.channel_names = [f"ch{c}" for c in range(self.series.shape[1])]
        if len(self.channel_names) != self.series.shape[1]:
            raise SchemaError("channel_names length does not match series width")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.series.shape[0],):
                raise SchemaError("labels must have one entry per timestep")
            if self.labels.size and self.labels.min() < 0:
                raise SchemaError("labels must be non-negative class ids")

    @property
    def n_timesteps(self) -> int:
        return self.series.shape[0]

    @property
    def n_channels(self) -> int:
        return self.series.shape[1]


@dataclass
class WindowSet:
    windows: Tensor  # N x W x C
    labels: np.ndarray | None = None
    source_domain: str = ""
    norm_stats: tuple[Tensor, Tensor] | None = None
    # per-window domain name; kept when sets are pooled
    provenance: list[str] | None = None

    def __post_init__(self):
        self.windows = as_tensor(self.windows)
        if self.windows.ndim != 3:
            raise SchemaError(f"windows must be N x W x C, got {self.windows.shape}")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (len(self.windows),):
                raise SchemaError("one label per window required")
        if self.provenance is None:
            self.provenance = [self.source_domain] * len(self.windows)

    def __len__(self) -> int:
        return self.windows.shape[0]

    @property
    def win_len(self) -> int:
        return self.windows.shape[1]

    @property
    def n_channels(self) -> int:
        return self.windows.shape[2]

    def features(self) -> Tensor:
        """Windows flattened to N x (W*C) feature vectors."""
        return self.windows.reshape(len(self), -1)

    def subset(self, idx) -> "WindowSet":
        idx = np.asarray(idx, dtype=np.int64)
        return WindowSet(
            self.windows[idx],
            None if self.labels is None else self.labels[idx],
            self.source_domain,
            self.norm_stats,
            [self.provenance[i] for i in idx],
        )


# --------------------------------------------------------------------------- CSV


def load_csv_domain(path, schema: dict, name: str | None = None, sample_rate: float = 50.0,
                    label_map: dict | None = None, policy: str = "drop") -> ActivityDomain:
    """Read one domain from a headered CSV file.

    ``schema`` maps ``timestamp`` to a column name, ``channels`` to a list of
    column names and, optionally, ``label`` to the label column. ``policy``
    decides what happens to rows with missing or non-numeric channel values:
    ``drop`` skips them, ``interpolate`` fills them linearly from neighbouring
    valid rows, ``fail`` raises.
    """
    if policy not in ("drop", "interpolate", "fail"):
        raise ValueError(f"unknown malformed-row policy {policy!r}")
    path = Path(path)
    channels = list(schema.get("channels", []))
    ts_col = schema.get("timestamp")
    label_col = schema.get("label")
    if not channels:
        raise SchemaError("schema must name at least one channel column")

    with open(path, newline="", encoding="utf-8") as fh:
        lines = (ln for ln in fh if not ln.lstrip().startswith("#"))
        reader = csv.reader(lines)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDomainError(f"{path}: no header row") from None
        header = [h.strip() for h in header]
        wanted = channels + [c for c in (ts_col, label_col) if c is not None]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise SchemaError(f"{path}: unknown column(s) {missing}; header is {header}")
        ch_idx = [header.index(c) for c in channels]
        lab_idx = header.index(label_col) if label_col is not None else None

        rows, labels, bad = [], [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            vals = []
            ok = True
            for k in ch_idx:
                try:
                    v = float(rec[k])
                    if not math.isfinite(v):
                        raise ValueError
                except (ValueError, IndexError):
                    v, ok = math.nan, False
                vals.append(v)
            lab = None
            if lab_idx is not None:
                try:
                    raw = rec[lab_idx].strip()
                    lab = label_map[raw] if label_map is not None else int(raw)
                except (KeyError, ValueError, IndexError):
                    ok = False
            if not ok:
                if policy == "fail":
                    raise SchemaError(f"{path}:{lineno}: malformed row {rec}")
                if policy == "drop" or lab is None and lab_idx is not None:
                    continue
                bad.append(len(rows))
            rows.append(vals)
            labels.append(lab)

    if not rows:
        raise EmptyDomainError(f"{path}: no valid rows")
    series = np.array(rows, dtype=np.float64)
    if bad:
        series = _interpolate_gaps(series)
    return ActivityDomain(
        name=name if name is not None else path.stem,
        series=series,
        labels=np.array(labels, dtype=np.int64) if lab_idx is not None else None,
        channel_names=channels,
        sample_rate=sample_rate,
    )


def _interpolate_gaps(series: Tensor) -> Tensor:
    out = series.copy()
    t = np.arange(len(series))
    for c in range(series.shape[1]):
        col = out[:, c]
        good = np.isfinite(col)
        if not good.any():
            raise EmptyDomainError(f"channel {c} has no valid values to interpolate from")
        col[~good] = np.interp(t[~good], t[good], col[good])
    return out


def write_csv_domain(domain: ActivityDomain, path) -> dict:
    """Write a domain in the standard layout and return its column schema."""
    path = Path(path)
    header = ["timestamp"] + list(domain.channel_names)
    if domain.labels is not None:
        header.append("label")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(domain.n_timesteps):
            row = [repr(i / domain.sample_rate)] + [repr(float(v)) for v in domain.series[i]]
            if domain.labels is not None:
                row.append(str(int(domain.labels[i])))
            w.writerow(row)
    os.replace(tmp, path)
    schema = {"timestamp": "timestamp", "channels": list(domain.channel_names)}
    if domain.labels is not None:
        schema["label"] = "label"
    return schema


def load_manifest(path) -> dict[str, ActivityDomain]:
    """Load every domain listed in a JSON manifest, keyed by name.

    Relative ``csv_path`` entries resolve against the manifest's directory.
    """
    path = Path(path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    out = {}
    for entry in doc["domains"]:
        csv_path = Path(entry["csv_path"])
        if not csv_path.is_absolute():
            csv_path = path.parent / csv_path
        out[entry["name"]] = load_csv_domain(
            csv_path,
            entry["columns"],
            name=entry["name"],
            sample_rate=float(entry.get("sample_rate", 50.0)),
            label_map=entry.get("label_map"),
            policy=entry.get("policy", "drop"),
        )
    return out


# ----------------------------------------------------------------- windowing


def majority_label(labels: np.ndarray) -> int:
    """Most frequent label; ties go to the smallest class id."""
    return int(np.argmax(np.bincount(labels)))


def window(domain: ActivityDomain, win_len: int = DEFAULT_WINDOW,
           stride: int = DEFAULT_STRIDE) -> WindowSet:
    T = domain.n_timesteps
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if win_len < 1 or win_len > T:
        raise InsufficientDataError(f"window length {win_len} exceeds series length {T}")
    n = (T - win_len) // stride + 1
    starts = np.arange(n) * stride
    idx = starts[:, None] + np.arange(win_len)[None, :]
    windows = domain.series[idx]
    labels = None
    if domain.labels is not None:
        labels = np.array([majority_label(domain.labels[s:s + win_len]) for s in starts],
                          dtype=np.int64)
    return WindowSet(windows, labels, domain.name)


def normalize_zscore(ws: WindowSet, stats: tuple[Tensor, Tensor] | None = None) -> WindowSet:
    """Per-channel z-scoring; fits the statistics on ``ws`` unless given."""
    if stats is None:
        flat = ws.windows.reshape(-1, ws.n_channels)
        mu = flat.mean(axis=0)
        sigma = flat.std(axis=0)
        const = sigma == 0
        if const.any():
            warnings.warn(f"constant channel(s) {np.flatnonzero(const).tolist()} in "
                          f"{ws.source_domain!r}; std treated as 1", ConstantChannelWarning)
            sigma = np.where(const, 1.0, sigma)
    else:
        mu, sigma = (as_tensor(s) for s in stats)
        if np.any(sigma <= 0):
            raise ValueError("normalization std must be positive")
    out = (ws.windows - mu) / sigma
    return WindowSet(out, ws.labels, ws.source_domain, (mu, sigma), list(ws.provenance))


def denormalize(ws: WindowSet) -> WindowSet:
    if ws.norm_stats is None:
        raise ValueError("window set carries no normalization statistics")
    mu, sigma = ws.norm_stats
    return WindowSet(ws.windows * sigma + mu, ws.labels, ws.source_domain, None,
                     list(ws.provenance))


def split(ws: WindowSet, fraction: float, seed: int) -> tuple[WindowSet, WindowSet]:
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie in (0, 1)")
    n = len(ws)
    if n < 2:
        raise InsufficientDataError("need at least 2 windows to split")
    perm = Rng(seed).fork("split").permutation(n)
    k = min(max(int(round(fraction * n)), 1), n - 1)
    return ws.subset(perm[:k]), ws.subset(perm[k:])


# ----------------------------------------------------------------- synthetic


@dataclass
class DomainTransform:
    """Per-domain distortion of the shared template stream."""

    name: str
    rotation: float = 0.0  # radians, applied to every consecutive channel pair
    scale: float = 1.0
    noise: float = 0.05
    permutation: list[int] | None = None

    def param_vector(self, n_channels: int) -> np.ndarray:
        """Rotation, scale, noise and the permutation matrix, scaled so that
        one swapped channel pair sits at distance 1 from the identity."""
        perm = self.permutation or list(range(n_channels))
        P = np.eye(n_channels)[perm]
        return np.concatenate([[self.rotation, self.scale, self.noise], 0.5 * P.ravel()])


@dataclass
class SynthSpec:
    domains: list[DomainTransform]
    n_classes: int = 3
    window_len: int = 64
    channels: int = 9
    segments_per_class: int = 8
    segment_windows: int = 4  # segment length in units of window_len
    sample_rate: float = 50.0
    # share of signal power carried by the static per-channel baseline
    baseline: float = 1.0
    # per-class template amplitude relative to the baseline
    amplitude: float = 0.35
    # fixed static offset per channel (e.g. gravity); random when None
    baseline_vector: list[float] | None = None
    # per-segment random offset of every channel, relative to the baseline
    posture_jitter: float = 0.0
    balance: bool = True
    # domain name -> name of its declared nearest domain
    nearest: dict[str, str] = field(default_factory=dict)
    seed: int = 0

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "domains"}
        d["domains"] = [dict(t.__dict__) for t in self.domains]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        d = dict(d)
        d["domains"] = [DomainTransform(**t) for t in d["domains"]]
        return cls(**d)


def validate_synth_spec(spec: SynthSpec) -> None:
    names = [t.name for t in spec.domains]
    if len(set(names)) != len(names):
        raise SpecError("domain names must be unique")
    if spec.n_classes < 1 or spec.channels < 1 or spec.window_len < 1:
        raise SpecError("n_classes, channels and window_len must be positive")
    if spec.baseline_vector is not None and (
            len(spec.baseline_vector) != spec.channels or not any(spec.baseline_vector)):
        raise SpecError("baseline_vector needs one non-zero-norm entry per channel")
    for t in spec.domains:
        if t.scale <= 0 or t.noise < 0:
            raise SpecError(f"domain {t.name}: scale must be > 0 and noise >= 0")
        if t.permutation is not None and sorted(t.permutation) != list(range(spec.channels)):
            raise SpecError(f"domain {t.name}: permutation is not a permutation of channels")
    params = {t.name: t.param_vector(spec.channels) for t in spec.domains}
    for a, b in spec.nearest.items():
        if a not in params or b not in params or a == b:
            raise SpecError(f"similarity plan entry {a!r} -> {b!r} names unknown domains")
        dist = {o: float(np.linalg.norm(params[a] - params[o])) for o in params if o != a}
        if dist[b] > min(dist.values()) + 1e-12:
            raise SpecError(
                f"similarity plan says {b!r} is nearest to {a!r}, but transform "
                f"parameters put {min(dist, key=dist.get)!r} closer")


def _class_templates(spec: SynthSpec, rng: Rng):
    """Frequencies, amplitudes and phase offsets of each class's sinusoid mixture."""
    n_comp = 2
    nyq = spec.sample_rate / 2
    freqs = rng.uniform((spec.n_classes, spec.channels, n_comp), 0.5, 0.2 * nyq)
    amps = spec.amplitude * rng.uniform((spec.n_classes, spec.channels, n_comp), 0.3, 1.0)
    phases = rng.uniform((spec.n_classes, spec.channels, n_comp), 0, 2 * np.pi)
    # class-specific offset on top of the shared baseline (posture)
    offsets = 0.5 * spec.amplitude * rng.normal((spec.n_classes, spec.channels))
    return freqs, amps, phases, offsets


def template_stream(spec: SynthSpec) -> tuple[Tensor, np.ndarray]:
    """Noise-free shared activity stream (T x C) and its per-timestep labels."""
    rng = Rng(spec.seed).fork("templates")
    freqs, amps, phases, offsets = _class_templates(spec, rng)
    baseline = rng.normal((spec.channels,))
    if spec.baseline_vector is not None:
        baseline = np.array(spec.baseline_vector, dtype=np.float64)
    baseline *= spec.baseline / np.sqrt(np.mean(baseline**2))
    seq_rng = Rng(spec.seed).fork("sequence")
    if spec.balance:
        order = np.repeat(np.arange(spec.n_classes), spec.segments_per_class)
        order = order[seq_rng.permutation(len(order))]
    else:
        order = seq_rng.integers(0, spec.n_classes, spec.n_classes * spec.segments_per_class)
    seg_len = spec.segment_windows * spec.window_len
    t = np.arange(seg_len) / spec.sample_rate
    chunks, labels = [], []
    for k in order:
        shift = seq_rng.uniform((spec.channels, 1), 0, 2 * np.pi)
        arg = 2 * np.pi * freqs[k][:, :, None] * t + phases[k][:, :, None] + shift[:, :, None]
        sig = (amps[k][:, :, None] * np.sin(arg)).sum(axis=1).T  # seg_len x C
        jitter = spec.posture_jitter * spec.baseline * seq_rng.normal((spec.channels,))
        chunks.append(sig + baseline + offsets[k] + jitter)
        labels.append(np.full(seg_len, k, dtype=np.int64))
    return np.concatenate(chunks), np.concatenate(labels)


def apply_transform(stream: Tensor, tf: DomainTransform, rng: Rng) -> Tensor:
    x = stream.copy()
    c, s = math.cos(tf.rotation), math.sin(tf.rotation)
    for j in range(0, x.shape[1] - 1, 2):
        a, b = x[:, j].copy(), x[:, j + 1].copy()
        x[:, j] = c * a - s * b
        x[:, j + 1] = s * a + c * b
    x = tf.scale * x
    if tf.noise > 0:
        x = x + rng.normal(x.shape, 0.0, tf.noise)
    if tf.permutation is not None:
        x = x[:, tf.permutation]
    return x


def synth_generate(spec: SynthSpec) -> list[ActivityDomain]:
    """Generate one domain per transform in ``spec`` from a shared template stream."""
    validate_synth_spec(spec)
    stream, labels = template_stream(spec)
    names = [f"ch{c}" for c in range(spec.channels)]
    out = []
    for tf in spec.domains:
        rng = Rng(spec.seed).fork(f"noise/{tf.name}")
        out.append(ActivityDomain(tf.name, apply_transform(stream, tf, rng), labels.copy(),
                                  list(names), spec.sample_rate))
    return out
