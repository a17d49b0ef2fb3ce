"""The transfer network: two conv blocks, an LSTM, two dense layers, MMD on fc1."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..data import WindowSet
from ..numeric import NonFiniteError, Rng, Tensor
from . import layers as L


class ConfigError(ValueError):
    pass


class DivergenceError(FloatingPointError):
    pass


@dataclass
class ConvSpec:
    kernel_len: int = 64
    depth: int = 32
    pool_len: int = 4
    pool_stride: int = 4


@dataclass
class ArchConfig:
    channels: int = 9
    window: int = 128
    conv: list[ConvSpec] = field(default_factory=lambda: [ConvSpec(), ConvSpec()])
    lstm_hidden: int = 64
    fc1_width: int = 128
    n_classes: int = 4
    keep_prob: float = 0.8

    def __post_init__(self):
        self.conv = [c if isinstance(c, ConvSpec) else ConvSpec(**c) for c in self.conv]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        return cls(**d)

    def shapes(self) -> dict[str, tuple[int, ...]]:
        """Validate the configuration and return every parameter's shape.

        A block whose input is shorter than its kernel uses a kernel cut to
        the available length; likewise for the pooling window.
        """
        if len(self.conv) != 2:
            raise ConfigError("exactly two convolution blocks are required")
        if min(self.channels, self.window, self.lstm_hidden, self.fc1_width) < 1:
            raise ConfigError("channels, window and layer widths must be positive")
        if self.n_classes < 2:
            raise ConfigError("need at least two classes")
        if not 0.0 < self.keep_prob <= 1.0:
            raise ConfigError("keep_prob must lie in (0, 1]")
        shapes = {}
        length = self.window
        depth = self.conv[0].depth
        for b, spec in enumerate(self.conv, start=1):
            if spec.depth != depth:
                raise ConfigError("both conv blocks must share the same depth")
            if min(spec.kernel_len, spec.depth, spec.pool_len, spec.pool_stride) < 1:
                raise ConfigError(f"conv block {b} has a non-positive size")
            k = min(spec.kernel_len, length)
            shapes[f"conv{b}.k"] = (spec.depth, k)
            shapes[f"conv{b}.b"] = (spec.depth,)
            length = L.pool_output_len(length - k + 1, spec.pool_len, spec.pool_stride)
            if length < 1:
                raise ConfigError(f"sequence vanishes after conv block {b}")
        feat = self.channels * depth
        H = self.lstm_hidden
        for g in L.GATES:
            shapes[f"lstm.W_{g}"] = (H, feat)
            shapes[f"lstm.U_{g}"] = (H, H)
            shapes[f"lstm.b_{g}"] = (H,)
        shapes["fc1.W"] = (self.fc1_width, H)
        shapes["fc1.b"] = (self.fc1_width,)
        shapes["fc2.W"] = (self.n_classes, self.fc1_width)
        shapes["fc2.b"] = (self.n_classes,)
        return shapes

    def lstm_steps(self) -> int:
        length = self.window
        for spec in self.conv:
            k = min(spec.kernel_len, length)
            length = L.pool_output_len(length - k + 1, spec.pool_len, spec.pool_stride)
        return length


Params = dict  # name -> Tensor, insertion-ordered as ArchConfig.shapes()


def init_network(arch: ArchConfig, seed: int) -> Params:
    """He-normal conv/dense weights, Glorot-normal LSTM weights, zero biases,
    forget-gate bias 1."""
    rng = Rng(seed).fork("init")
    params = {}
    for name, shape in arch.shapes().items():
        r = rng.fork(name)
        if name.endswith(".b") or ".b_" in name:
            p = np.zeros(shape)
            if name == "lstm.b_f":
                p[:] = 1.0
        elif name.startswith("lstm."):
            fan_out, fan_in = shape
            p = r.normal(shape, 0.0, math.sqrt(2.0 / (fan_in + fan_out)))
        else:
            p = r.normal(shape, 0.0, math.sqrt(2.0 / shape[1]))
        params[name] = p
    return params


def _stack_lstm(params: Params):
    W = np.concatenate([params[f"lstm.W_{g}"] for g in L.GATES])
    U = np.concatenate([params[f"lstm.U_{g}"] for g in L.GATES])
    b = np.concatenate([params[f"lstm.b_{g}"] for g in L.GATES])
    return W, U, b


def _unstack_lstm(dW, dU, db, H: int) -> dict:
    out = {}
    for j, g in enumerate(L.GATES):
        sl = slice(j * H, (j + 1) * H)
        out[f"lstm.W_{g}"] = dW[sl]
        out[f"lstm.U_{g}"] = dU[sl]
        out[f"lstm.b_{g}"] = db[sl]
    return out


@dataclass
class ForwardTrace:
    fc1: Tensor  # post-ReLU, pre-dropout
    logits: Tensor
    probs: Tensor
    dropout_mask: Tensor
    caches: dict


def features(params: Params, arch: ArchConfig, x: Tensor) -> tuple[Tensor, Tensor, dict]:
    """Input N x W x C to fc1 activations (post-ReLU). Also returns fc1 pre-activation."""
    h = np.ascontiguousarray(x.transpose(0, 2, 1))[:, :, None, :]  # N C 1 W
    caches = {}
    for b, spec in enumerate(arch.conv, start=1):
        h, caches[f"conv{b}"] = L.conv1d_block(h, params[f"conv{b}.k"], params[f"conv{b}.b"],
                                               spec.pool_len, spec.pool_stride)
    N, C, D, T = h.shape
    seq = h.transpose(0, 3, 1, 2).reshape(N, T, C * D)
    W, U, bias = _stack_lstm(params)
    hT, caches["lstm"] = L.lstm_forward(seq, W, U, bias)
    caches["lstm_shape"] = (N, C, D, T)
    z1 = L.dense(hT, params["fc1.W"], params["fc1.b"])
    caches["fc1_in"] = hT
    return np.maximum(z1, 0.0), z1, caches


def forward(params: Params, arch: ArchConfig, x: Tensor, train: bool = False,
            rng: Rng | None = None) -> ForwardTrace:
    a1, z1, caches = features(params, arch, x)
    caches["fc1_z"] = z1
    d1, mask = L.dropout(a1, arch.keep_prob, rng, train)
    logits = L.dense(d1, params["fc2.W"], params["fc2.b"])
    caches["fc2_in"] = d1
    return ForwardTrace(a1, logits, L.softmax(logits), mask, caches)


def predict_proba(params: Params, arch: ArchConfig, x: Tensor, batch: int = 256) -> Tensor:
    out = [forward(params, arch, x[i:i + batch]).probs for i in range(0, len(x), batch)]
    return np.concatenate(out) if out else np.zeros((0, arch.n_classes))


def backward(params: Params, arch: ArchConfig, trace: ForwardTrace,
             dlogits: Tensor | None, dfc1: Tensor | None = None) -> dict:
    """Backprop from logits and/or directly from fc1 activations to all params."""
    caches = trace.caches
    grads = {}
    da1 = np.zeros_like(trace.fc1)
    if dlogits is not None:
        dd1, grads["fc2.W"], grads["fc2.b"] = L.dense_backward(dlogits, caches["fc2_in"],
                                                               params["fc2.W"])
        da1 += dd1 * trace.dropout_mask
    else:
        grads["fc2.W"] = np.zeros_like(params["fc2.W"])
        grads["fc2.b"] = np.zeros_like(params["fc2.b"])
    if dfc1 is not None:
        da1 += dfc1
    dz1 = da1 * (caches["fc1_z"] > 0)
    dhT, grads["fc1.W"], grads["fc1.b"] = L.dense_backward(dz1, caches["fc1_in"], params["fc1.W"])
    dseq, dW, dU, db = L.lstm_backward(dhT, caches["lstm"])
    grads.update(_unstack_lstm(dW, dU, db, arch.lstm_hidden))
    N, C, D, T = caches["lstm_shape"]
    dh = dseq.reshape(N, T, C, D).transpose(0, 2, 3, 1)
    dh, grads["conv2.k"], grads["conv2.b"] = L.conv1d_block_backward(dh, caches["conv2"])
    _, grads["conv1.k"], grads["conv1.b"] = L.conv1d_block_backward(dh, caches["conv1"],
                                                                    need_dx=False)
    return grads


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_source: int = 64
    batch_target: int = 64
    mu: float = 0.5
    epochs: int = 10
    seed: int = 0
    eval_every: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_source < 2 or self.batch_target < 2:
            raise ConfigError("batch sizes must be at least 2")
        if not 0.0 <= self.mu <= 1.0:
            raise ConfigError("mu must lie in [0, 1]")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")


def loss_and_grads(params: Params, arch: ArchConfig, xs: Tensor, ys: np.ndarray,
                   xt: Tensor | None, mu: float, rng: Rng | None, train: bool = True):
    """Joint objective ``cross-entropy(source) + mu * MMD(fc1_s, fc1_t)`` and its gradient."""
    tr_s = forward(params, arch, xs, train, rng)
    loss_c, dlogits = L.cross_entropy_loss(tr_s.probs, ys)
    loss_a = 0.0
    dfc1_s = None
    grads_t = None
    if mu != 0.0 and xt is not None:
        a1_t, z1_t, caches_t = features(params, arch, xt)
        loss_a, g_s, g_t = L.adaptation_loss(tr_s.fc1, a1_t)
        dfc1_s = mu * g_s
        caches_t["fc1_z"] = z1_t
        tr_t = ForwardTrace(a1_t, None, None, None, caches_t)
        grads_t = backward(params, arch, tr_t, None, mu * g_t)
    grads = backward(params, arch, tr_s, dlogits, dfc1_s)
    if grads_t is not None:
        for k in grads:
            grads[k] = grads[k] + grads_t[k]
    total = loss_c + mu * loss_a
    return {"loss_c": loss_c, "loss_a": loss_a, "total": total}, grads


def train_step(params: Params, arch: ArchConfig, xs: Tensor, ys: np.ndarray, xt: Tensor | None,
               cfg: TrainConfig, rng: Rng, step: int = 0):
    """One SGD step on the joint objective. Returns new params and the loss metrics."""
    # finiteness is checked explicitly below
    with np.errstate(over="ignore", invalid="ignore"):
        metrics, grads = loss_and_grads(params, arch, xs, ys, xt, cfg.mu, rng)
        if not math.isfinite(metrics["total"]):
            raise DivergenceError(f"non-finite loss at step {step}")
        new = {k: v - cfg.learning_rate * grads[k] for k, v in params.items()}
    for k, v in new.items():
        if not np.all(np.isfinite(v)):
            raise DivergenceError(f"parameter {k} became non-finite at step {step}")
    return new, metrics


@dataclass
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows: true class, columns: predicted class


def evaluate(params: Params, arch: ArchConfig, ws: WindowSet) -> EvalResult:
    if ws.labels is None:
        raise ValueError("evaluation needs a labeled window set")
    pred = np.argmax(predict_proba(params, arch, ws.windows), axis=1)
    k = arch.n_classes
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (ws.labels, pred), 1)
    acc = float(np.trace(conf)) / len(ws) if len(ws) else 0.0
    return EvalResult(acc, conf)


@dataclass
class EpochRecord:
    epoch: int
    loss_c: float
    loss_a: float
    loss_total: float
    target_accuracy: float | None


def fit(params: Params, arch: ArchConfig, source: WindowSet, target: WindowSet,
        cfg: TrainConfig, target_eval: WindowSet | None = None):
    """Minibatch SGD over the pooled source with target batches cycled alongside.

    Target labels are never used for training; when ``target_eval`` carries
    labels its accuracy is logged every ``eval_every`` epochs.
    """
    if source.labels is None:
        raise ValueError("source windows must be labeled")
    root = Rng(cfg.seed).fork("fit")
    nt = len(target)
    t_perm, t_pos, t_pass = None, nt, 0
    history = []
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = root.fork(f"shuffle/{epoch}").permutation(len(source))
        drop_rng = root.fork(f"dropout/{epoch}")
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, len(order), cfg.batch_source):
            idx = order[start:start + cfg.batch_source]
            if len(idx) < 2:
                continue
            xt = None
            if cfg.mu != 0.0:
                take = []
                while len(take) < cfg.batch_target:
                    if t_pos >= nt:
                        t_perm = root.fork(f"target/{t_pass}").permutation(nt)
                        t_pos, t_pass = 0, t_pass + 1
                    n = min(cfg.batch_target - len(take), nt - t_pos)
                    take.extend(t_perm[t_pos:t_pos + n])
                    t_pos += n
                xt = target.windows[np.array(take)]
            try:
                params, m = train_step(params, arch, source.windows[idx], source.labels[idx], xt,
                                       cfg, drop_rng, step)
            except DivergenceError as exc:
                raise DivergenceError(f"seed {cfg.seed}, epoch {epoch}: {exc}") from exc
            step += 1
            sums += (m["loss_c"], m["loss_a"], m["total"])
            n_batches += 1
        means = sums / max(n_batches, 1)
        acc = None
        if target_eval is not None and target_eval.labels is not None and (
                epoch % cfg.eval_every == 0 or epoch == cfg.epochs):
            acc = evaluate(params, arch, target_eval).accuracy
        history.append(EpochRecord(epoch, *means.tolist(), acc))
    return params, history


def check_params(params: Params, arch: ArchConfig) -> None:
    shapes = arch.shapes()
    if list(params) != list(shapes):
        raise ConfigError("parameter names do not match the architecture")
    for k, shape in shapes.items():
        if params[k].shape != shape:
            raise ConfigError(f"{k}: shape {params[k].shape}, expected {shape}")
        if not np.all(np.isfinite(params[k])):
            raise NonFiniteError(f"{k} is not finite")
