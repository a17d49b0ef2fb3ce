"""Command-line harness: synth, distance, select, train, sweep.

Every run writes ``config.json`` into its output directory. That file holds
the resolved configuration, input file hashes and format versions, which is
enough to reproduce the run. All other outputs are deterministic given that
echo, except ``timings.json``.

Exit codes: 0 success, 2 configuration or input error (raised before any
computation), 3 runtime error (divergence, degenerate data, failed sweep
cells).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import statistics
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__, suites
from .data import SynthSpec, load_manifest, synth_generate, write_csv_domain
from .distance import SemanticWeights
from .experiments import CellRunner, SweepCell, train_transfer, windowed
from .tnnar import checkpoint
from .tnnar.network import ArchConfig, ConvSpec, TrainConfig
from .ussar import CadConfig, SelectionError, rank_sources, select_sources

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

REPORT_VERSION = 1
DEFAULT_GRID = [0.0, 0.25, 0.5, 0.75, 1.0]


class CliConfigError(ValueError):
    pass


class RuntimeFailure(RuntimeError):
    pass


# ------------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    manifest: str | None = None
    synth: dict | str | None = None  # SynthSpec fields, or a path to a JSON file of them
    target: str | None = None
    sources: list[str] | None = None  # default: every other domain
    k: int = 1
    lam: float = 0.5
    mu: float = 0.5
    weights: str | None = None
    arch: dict = field(default_factory=dict)
    train: dict = field(default_factory=dict)
    seeds: list[int] = field(default_factory=lambda: [0])
    out: str = "out"
    window: int = 128
    stride: int = 64
    selection: str | None = None  # SelectionResult JSON for `train`
    lambda_grid: list[float] = field(default_factory=lambda: list(DEFAULT_GRID))
    mu_grid: list[float] = field(default_factory=lambda: list(DEFAULT_GRID))
    reuse_source_stats: bool = False

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise CliConfigError(f"unknown config key(s): {unknown}")
        cfg = cls(**d)
        if base_dir is not None:
            for key in ("manifest", "weights", "selection", "synth"):
                val = getattr(cfg, key)
                if isinstance(val, str) and not Path(val).is_absolute():
                    setattr(cfg, key, str(base_dir / val))
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise CliConfigError("config file must hold a JSON object")
        return cls.from_dict(doc, path.parent.resolve())

    def echo(self) -> dict:
        d = asdict(self)
        d.pop("out")  # where results go does not change them
        return d


def _check_unit(name: str, v: float) -> None:
    if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
        raise CliConfigError(f"{name} must lie in [0, 1], got {v!r}")


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# -------------------------------------------------------------- atomic output


def write_atomic(path: Path, data: str | bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    if isinstance(data, str):
        tmp.write_text(data, encoding="utf-8", newline="\n")
    else:
        tmp.write_bytes(data)
    os.replace(tmp, path)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


def history_csv(history) -> str:
    rows = [[h.epoch, h.loss_c, h.loss_a, h.loss_total, h.target_accuracy] for h in history]
    return csv_text(["epoch", "loss_c", "loss_a", "loss_total", "target_accuracy"], rows)


# ---------------------------------------------------------------- experiment


class Experiment:
    """A validated configuration with its domains loaded and windowed."""

    def __init__(self, cfg: ExperimentConfig, need_weights: bool = True, need_k: bool = True):
        self.cfg = cfg
        self.inputs: dict[str, str] = {}
        domains = self._load_domains()
        names = [d.name for d in domains]
        if cfg.target is None:
            raise CliConfigError("a target domain is required")
        if cfg.target not in names:
            raise CliConfigError(f"target {cfg.target!r} not among domains {names}")
        sources = cfg.sources if cfg.sources is not None else [n for n in names if n != cfg.target]
        missing = [s for s in sources if s not in names]
        if missing:
            raise CliConfigError(f"unknown source domain(s) {missing}; domains are {names}")
        if cfg.target in sources:
            raise CliConfigError("the target cannot also be a source")
        if len(set(sources)) != len(sources):
            raise CliConfigError("source names must be unique")
        if not sources:
            raise CliConfigError("at least one source domain is required")
        if need_k and not 1 <= cfg.k <= len(sources):
            raise CliConfigError(f"K must lie in [1, {len(sources)}], got {cfg.k}")
        _check_unit("lambda", cfg.lam)
        _check_unit("mu", cfg.mu)
        if not cfg.seeds or any(not isinstance(s, int) or s < 0 for s in cfg.seeds):
            raise CliConfigError("seeds must be a non-empty list of non-negative integers")
        if cfg.window < 1 or cfg.stride < 1:
            raise CliConfigError("window and stride must be positive")
        self.sources = list(sources)
        self.sw = None
        if need_weights:
            if cfg.weights is None:
                raise CliConfigError("a semantic weights file is required (see configs/)")
            self.sw = SemanticWeights.load(cfg.weights)
            self.inputs[cfg.weights] = _sha256(cfg.weights)
            if self.sw.target != cfg.target:
                raise CliConfigError(f"weights are for target {self.sw.target!r}, not {cfg.target!r}")
            absent = [s for s in self.sources if s not in self.sw.weights]
            if absent:
                raise CliConfigError(f"weights file has no entry for {absent}")
        keep = [d for d in domains if d.name == cfg.target or d.name in self.sources]
        self.raw = windowed(keep, cfg.window, cfg.stride)

    def _load_domains(self):
        cfg = self.cfg
        if (cfg.manifest is None) == (cfg.synth is None):
            raise CliConfigError("give exactly one of 'manifest' and 'synth'")
        if cfg.manifest is not None:
            self.inputs[cfg.manifest] = _sha256(cfg.manifest)
            for p in _manifest_csvs(cfg.manifest):
                self.inputs[str(p)] = _sha256(p)
            return list(load_manifest(cfg.manifest).values())
        spec = cfg.synth
        if isinstance(spec, str):
            self.inputs[spec] = _sha256(spec)
            spec = json.loads(Path(spec).read_text(encoding="utf-8"))
        return synth_generate(SynthSpec.from_dict(spec))

    def arch(self) -> ArchConfig:
        tgt = self.raw[self.cfg.target]
        labels = [ws.labels.max() for ws in self.raw.values() if ws.labels is not None and len(ws)]
        base = {"channels": tgt.n_channels, "window": self.cfg.window,
                "n_classes": int(max(labels)) + 1 if labels else 2}
        over = dict(self.cfg.arch)
        for key in ("channels", "window"):
            if key in over and over[key] != base[key]:
                raise CliConfigError(f"arch.{key}={over[key]} does not match the data ({base[key]})")
        if "conv" in over:
            over["conv"] = [ConvSpec(**c) for c in over["conv"]]
        arch = ArchConfig(**{**base, **over})
        arch.shapes()
        return arch

    def train_config(self, mu: float, seed: int) -> TrainConfig:
        clash = {"mu", "seed"} & set(self.cfg.train)
        if clash:
            raise CliConfigError(f"set {sorted(clash)} at the top level, not under 'train'")
        return TrainConfig(**{**self.cfg.train, "mu": mu, "seed": seed})

    def cad_config(self, lam: float | None = None) -> CadConfig:
        return CadConfig.seeded(self.cfg.seeds[0], self.cfg.lam if lam is None else lam)


def _manifest_csvs(path) -> list[Path]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    out = []
    for e in doc["domains"]:
        p = Path(e["csv_path"])
        out.append(p if p.is_absolute() else Path(path).parent / p)
    return out


def write_echo(out: Path, command: str, cfg: ExperimentConfig | None, inputs: dict,
               extra: dict | None = None) -> None:
    doc = {
        "command": command,
        "package_version": __version__,
        "formats": {"checkpoint": checkpoint.FORMAT_VERSION, "report": REPORT_VERSION},
        "config": cfg.echo() if cfg is not None else None,
        "inputs": dict(sorted(inputs.items())),
    }
    if extra:
        doc.update(extra)
    write_atomic(out / "config.json", dump_json(doc))


# ------------------------------------------------------------------ reports


@dataclass
class ExperimentReport:
    target: str
    sources: list[str]
    mu: float
    per_seed: list[dict]  # each with seed and accuracy
    accuracy_mean: float | None
    accuracy_std: float | None
    selection: dict | None = None
    cad_table: list[dict] | None = None

    @staticmethod
    def summarize(rows: list[dict]) -> tuple[float | None, float | None]:
        accs = [r["accuracy"] for r in rows if r["accuracy"] is not None]
        if not accs:
            return None, None
        return statistics.fmean(accs), statistics.pstdev(accs)

    def to_dict(self) -> dict:
        mean, std = self.summarize(self.per_seed)
        if (mean is None) != (self.accuracy_mean is None) or (
                mean is not None and (abs(mean - self.accuracy_mean) > 1e-12
                                      or abs(std - self.accuracy_std) > 1e-12)):
            raise RuntimeFailure("report mean/std disagree with the per-seed rows")
        d = asdict(self)
        d["format_version"] = REPORT_VERSION
        return d


# ----------------------------------------------------------------- commands


def cmd_synth(args, cfg: ExperimentConfig | None, spec: SynthSpec, out: Path) -> int:
    domains = synth_generate(spec)
    entries = []
    for d in domains:
        schema = write_csv_domain(d, _prepared(out) / f"{d.name}.csv")
        entries.append({"name": d.name, "csv_path": f"{d.name}.csv", "columns": schema,
                        "sample_rate": d.sample_rate, "label_map": None})
    write_atomic(out / "manifest.json", dump_json({"domains": entries}))
    write_atomic(out / "spec.json", dump_json(spec.to_dict()))
    # example weights: uniform over the other domains, first domain as target
    names = [d.name for d in domains]
    if len(names) > 1:
        sw = SemanticWeights.uniform(names[0], names[1:])
        write_atomic(out / "weights.json", dump_json({"target": sw.target, "weights": sw.weights}))
    write_echo(out, "synth", cfg, {}, {"spec": spec.to_dict()})
    print(f"wrote {len(domains)} domains to {out}")
    return EXIT_OK


def _prepared(out: Path) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_distance(exp: Experiment, out: Path) -> int:
    cfg = exp.cfg
    excluded: dict[str, str] = {}
    scores = rank_sources(exp.raw[cfg.target], [exp.raw[s] for s in exp.sources], cfg.lam,
                          exp.sw, exp.cad_config(), excluded)
    rows = [[s.pair[1], s.general, s.specific, s.lam, s.combined] for s in scores]
    write_atomic(out / "cad_table.csv",
                 csv_text(["source", "d_general", "d_specific", "lambda", "cad"], rows))
    write_echo(out, "distance", cfg, exp.inputs)
    for name, why in excluded.items():
        print(f"excluded {name}: {why}", file=sys.stderr)
    print(f"cad table: {len(rows)} rows")
    return EXIT_OK


def cmd_select(exp: Experiment, out: Path) -> int:
    cfg = exp.cfg
    res = select_sources(exp.raw[cfg.target], [exp.raw[s] for s in exp.sources], cfg.k, cfg.lam,
                         exp.sw, exp.cad_config())
    write_atomic(out / "selection.json", res.to_json())
    write_echo(out, "select", cfg, exp.inputs)
    print("selected: " + ", ".join(res.selected))
    return EXIT_OK


def cmd_train(exp: Experiment, out: Path) -> int:
    cfg = exp.cfg
    selection = None
    sources = exp.sources
    if cfg.selection is not None:
        try:
            selection = json.loads(Path(cfg.selection).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise CliConfigError(f"cannot read selection {cfg.selection}: {exc}") from exc
        if selection.get("target") != cfg.target:
            raise CliConfigError("the selection file was made for a different target")
        sources = list(selection["selected"])
        unknown = [s for s in sources if s not in exp.raw]
        if unknown:
            raise CliConfigError(f"selected source(s) {unknown} are not loaded")
    arch = exp.arch()
    tcfgs = [exp.train_config(cfg.mu, s) for s in cfg.seeds]
    rows, timings = [], {}
    for tc in tcfgs:
        t0 = time.perf_counter()
        try:
            run = train_transfer(exp.raw, cfg.target, sources, arch, tc, cfg.reuse_source_stats)
        except (ValueError, FloatingPointError) as exc:
            raise RuntimeFailure(f"training failed (seed {tc.seed}): {exc}") from exc
        timings[f"seed_{tc.seed}"] = time.perf_counter() - t0
        sub = out / f"seed_{tc.seed}"
        sub.mkdir(parents=True, exist_ok=True)
        checkpoint.save(sub / "model.ckpt", run.params, arch)
        write_atomic(sub / "history.csv", history_csv(run.history))
        last = run.history[-1] if run.history else None
        acc = None if last is None or last.target_accuracy is None else float(last.target_accuracy)
        row = {"seed": tc.seed, "accuracy": acc,
               "loss_total": None if last is None else last.loss_total,
               "checkpoint": f"seed_{tc.seed}/model.ckpt", "history": f"seed_{tc.seed}/history.csv"}
        write_atomic(sub / "report.json", dump_json(row))
        rows.append(row)
    mean, std = ExperimentReport.summarize(rows)
    report = ExperimentReport(cfg.target, sources, cfg.mu, rows, mean, std, selection,
                              selection.get("ranked") if selection else None)
    write_atomic(out / "report.json", dump_json(report.to_dict()))
    write_atomic(out / "timings.json", dump_json({"wall_seconds": timings}))
    write_echo(out, "train", cfg, exp.inputs, {"arch": arch.to_dict(),
                                              "train": asdict(tcfgs[0]) | {"seed": None}})
    if mean is not None:
        print(f"target accuracy {mean:.4f} +/- {std:.4f} over {len(rows)} seed(s)")
    return EXIT_OK


def _cell_name(lam: float, mu: float) -> str:
    return f"lam{lam!r}_mu{mu!r}.json"


def cmd_sweep(exp: Experiment, out: Path) -> int:
    cfg = exp.cfg
    if not cfg.lambda_grid or not cfg.mu_grid:
        raise CliConfigError("the lambda and mu grids must be non-empty")
    for v in cfg.lambda_grid:
        _check_unit("lambda grid value", v)
    for v in cfg.mu_grid:
        _check_unit("mu grid value", v)
    arch = exp.arch()
    base = exp.train_config(cfg.mu, cfg.seeds[0])
    echo = cfg.echo()
    for key in ("lambda_grid", "mu_grid", "lam", "mu"):
        echo.pop(key)
    fingerprint = hashlib.sha256(dump_json({"config": echo, "inputs": exp.inputs}).encode()).hexdigest()
    runner = CellRunner({s: exp.raw for s in cfg.seeds}, cfg.target, exp.sources, cfg.k, arch,
                        base, exp.sw)
    cells_dir = out / "cells"
    cells: list[SweepCell] = []
    timings = {}
    for lam in cfg.lambda_grid:
        for mu in cfg.mu_grid:
            path = cells_dir / _cell_name(lam, mu)
            if path.exists():
                doc = json.loads(path.read_text(encoding="utf-8"))
                if doc.get("fingerprint") == fingerprint and doc["cell"]["error"] is None:
                    cells.append(SweepCell.from_dict(doc["cell"]))
                    continue
            t0 = time.perf_counter()
            cell = runner.run(lam, mu)
            timings[path.name] = time.perf_counter() - t0
            write_atomic(path, dump_json({"fingerprint": fingerprint, "cell": cell.to_dict()}))
            cells.append(cell)
            if cell.error:
                print(f"cell lambda={lam} mu={mu} failed: {cell.error}", file=sys.stderr)
    rows = [[c.lam, c.mu, None if c.error else c.mean, None if c.error else c.std,
             len(c.accuracies), c.error or ""] for c in cells]
    write_atomic(out / "sweep.csv", csv_text(
        ["lambda", "mu", "accuracy_mean", "accuracy_std", "n_seeds", "error"], rows))
    write_atomic(out / "timings.json", dump_json({"wall_seconds": timings}))
    write_echo(out, "sweep", cfg, exp.inputs, {"arch": arch.to_dict(), "fingerprint": fingerprint})
    ok = [c.mean for c in cells if not c.error]
    if ok:
        print(f"{len(cells)} cells, accuracy range {max(ok) - min(ok):.4f}")
    return EXIT_RUNTIME if any(c.error for c in cells) else EXIT_OK


# ---------------------------------------------------------------------- main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cdar", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in [("synth", "generate synthetic domains as CSV plus a manifest"),
                        ("distance", "write the CAD table of every source to the target"),
                        ("select", "choose K sources for the target"),
                        ("train", "train the transfer network once per seed"),
                        ("sweep", "train over a lambda x mu grid")]:
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="JSON experiment config (or synth spec)")
        s.add_argument("--out", help="output directory")
        s.add_argument("--seed", type=int, help="single seed; replaces the config's seed list")
        if name == "synth":
            s.add_argument("--suite", choices=sorted(suites.SUITES), help="built-in scenario")
            continue
        s.add_argument("--k", type=int)
        s.add_argument("--lambda", dest="lam", type=float)
        s.add_argument("--mu", type=float)
        s.add_argument("--target")
        s.add_argument("--sources", help="comma-separated source names")
        s.add_argument("--manifest")
        s.add_argument("--weights")
        if name == "train":
            s.add_argument("--selection", help="selection.json from `select`")
    return p


def _resolve(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for key in ("k", "lam", "mu", "target", "manifest", "weights", "selection"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(cfg, key, str(Path(val).resolve()) if key in ("manifest", "weights", "selection")
                    else val)
    if getattr(args, "sources", None):
        cfg.sources = [s.strip() for s in args.sources.split(",") if s.strip()]
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.out:
        cfg.out = args.out
    return cfg


def _synth_spec(args) -> tuple[ExperimentConfig | None, SynthSpec]:
    if args.suite:
        if args.config:
            raise CliConfigError("give either --suite or --config, not both")
        return None, suites.SUITES[args.suite](args.seed or 0)
    if not args.config:
        raise CliConfigError("synth needs --config or --suite")
    try:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliConfigError(f"cannot read {args.config}: {exc}") from exc
    cfg = None
    if "domains" not in doc:
        cfg = ExperimentConfig.from_dict(doc, Path(args.config).parent.resolve())
        doc = cfg.synth
        if isinstance(doc, str):
            doc = json.loads(Path(doc).read_text(encoding="utf-8"))
        if not isinstance(doc, dict):
            raise CliConfigError("the config has no synth spec")
    spec = SynthSpec.from_dict(doc)
    if args.seed is not None:
        spec.seed = args.seed
    from .data import validate_synth_spec
    validate_synth_spec(spec)
    return cfg, spec


_CONFIG_ERRORS = (CliConfigError, SelectionError, ValueError, KeyError, TypeError, OSError)
_RUNTIME_ERRORS = (RuntimeFailure, ValueError, FloatingPointError, ArithmeticError, OSError)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            cfg, spec = _synth_spec(args)
            out = Path(args.out or (cfg.out if cfg else "out"))
        else:
            cfg = _resolve(args)
            out = Path(cfg.out)
            exp = Experiment(cfg, need_weights=args.command != "train",
                             need_k=args.command in ("select", "sweep"))
            if args.command in ("train", "sweep"):
                exp.arch()
                exp.train_config(cfg.mu, cfg.seeds[0])
    except _CONFIG_ERRORS as exc:
        print(f"config error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out.mkdir(parents=True, exist_ok=True)
        if args.command == "synth":
            return cmd_synth(args, cfg, spec, out)
        return {"distance": cmd_distance, "select": cmd_select, "train": cmd_train,
                "sweep": cmd_sweep}[args.command](exp, out)
    except CliConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except _RUNTIME_ERRORS as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
