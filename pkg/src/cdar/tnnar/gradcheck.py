"""Central-difference checks of every layer's backward pass.

Each check builds a small random problem, reduces the layer output to a
scalar through a fixed random projection and compares analytic gradients
with numerical ones. ``rel_error`` is the norm ratio
``|num - ana| / (|num| + |ana|)`` over the checked entries.
"""

from __future__ import annotations

import numpy as np

from ..numeric import Rng
from . import layers as L
from .network import ArchConfig, ConvSpec, init_network, loss_and_grads

STEP = 1e-6


def numeric_grad(f, x: np.ndarray, idx=None, h: float = STEP) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    for i in (np.ndindex(x.shape) if idx is None else idx):
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def rel_error(num: np.ndarray, ana: np.ndarray, idx=None) -> float:
    if idx is not None:
        sel = tuple(np.array(list(idx)).T)
        num, ana = num[sel], ana[sel]
    denom = np.linalg.norm(num) + np.linalg.norm(ana)
    return float(np.linalg.norm(num - ana) / denom) if denom > 1e-12 else 0.0


def _away_from_zero(r: np.random.Generator, shape, gap: float = 1e-2) -> np.ndarray:
    # keeps ReLU inputs off the kink by more than the finite-difference step
    x = r.normal(size=shape)
    return x + np.where(x >= 0, gap, -gap)


def _check(name: str, fwd, inputs: dict, analytic, errs: dict) -> None:
    for key, x in inputs.items():
        num = numeric_grad(fwd, x)
        errs[f"{name}:{key}"] = rel_error(num, analytic[key])


def check_layers(seed: int) -> dict[str, float]:
    """Relative gradient error of every layer w.r.t. every input and parameter."""
    r = np.random.default_rng(seed)
    errs: dict[str, float] = {}

    # conv, first block (one input map) and depthwise second block
    for name, shape in (("conv", (2, 3, 1, 12)), ("conv_depthwise", (2, 3, 4, 10))):
        x = r.normal(size=shape)
        k = r.normal(size=(4, 5))
        b = r.normal(size=4)
        R = r.normal(size=(shape[0], shape[1], 4, shape[3] - 4))

        def f():
            return float(np.sum(L.conv_forward(x, k, b)[0] * R))

        _, cache = L.conv_forward(x, k, b)
        dx, dk, db = L.conv_backward(R, cache)
        _check(name, f, {"x": x, "kernel": k, "bias": b}, {"x": dx, "kernel": dk, "bias": db}, errs)

    x = _away_from_zero(r, (3, 7))
    R = r.normal(size=(3, 7))
    _, mask = L.relu_forward(x)
    _check("relu", lambda: float(np.sum(L.relu_forward(x)[0] * R)), {"x": x},
           {"x": L.relu_backward(R, mask)}, errs)

    for name, (length, pool, stride) in (("maxpool", (11, 3, 2)), ("maxpool_short", (3, 5, 2))):
        x = r.normal(size=(2, 3, length))
        out, cache = L.maxpool_forward(x, pool, stride)
        R = r.normal(size=out.shape)
        _check(name, lambda: float(np.sum(L.maxpool_forward(x, pool, stride)[0] * R)), {"x": x},
               {"x": L.maxpool_backward(R, cache)}, errs)

    x = r.normal(size=(2, 2, 1, 16))
    k = r.normal(size=(3, 4))
    b = 0.1 * r.normal(size=3)
    out, cache = L.conv1d_block(x, k, b, 2, 2)
    R = r.normal(size=out.shape)
    dx, dk, db = L.conv1d_block_backward(R, cache)
    _check("conv_block", lambda: float(np.sum(L.conv1d_block(x, k, b, 2, 2)[0] * R)),
           {"x": x, "kernel": k, "bias": b}, {"x": dx, "kernel": dk, "bias": db}, errs)

    N, T, D, H = 3, 5, 4, 3
    x = r.normal(size=(N, T, D))
    W = 0.5 * r.normal(size=(4 * H, D))
    U = 0.5 * r.normal(size=(4 * H, H))
    b = 0.1 * r.normal(size=4 * H)
    R = r.normal(size=(N, H))
    h, cache = L.lstm_forward(x, W, U, b)
    dx, dW, dU, db = L.lstm_backward(R, cache)
    _check("lstm", lambda: float(np.sum(L.lstm_forward(x, W, U, b)[0] * R)),
           {"x": x, "W": W, "U": U, "b": b}, {"x": dx, "W": dW, "U": dU, "b": db}, errs)

    h = r.normal(size=(4, 5))
    W = r.normal(size=(3, 5))
    b = r.normal(size=3)
    R = r.normal(size=(4, 3))
    dh, dW, db = L.dense_backward(R, h, W)
    _check("dense", lambda: float(np.sum(L.dense(h, W, b) * R)), {"h": h, "W": W, "b": b},
           {"h": dh, "W": dW, "b": db}, errs)

    h = r.normal(size=(4, 6))
    rng = Rng(seed).fork("dropout")
    _, mask = L.dropout(h, 0.8, rng)
    R = r.normal(size=h.shape)
    _check("dropout", lambda: float(np.sum(L.dropout(h, 0.8, Rng(seed).fork("dropout"))[0] * R)),
           {"h": h}, {"h": R * mask}, errs)
    return errs


def check_losses(seed: int) -> dict[str, float]:
    """Relative gradient error of the classification and adaptation losses."""
    r = np.random.default_rng(seed)
    errs: dict[str, float] = {}
    z = r.normal(size=(5, 4))
    y = r.integers(0, 4, size=5)
    _, dz = L.cross_entropy_loss(L.softmax(z), y)
    _check("cross_entropy", lambda: L.cross_entropy_loss(L.softmax(z), y)[0], {"logits": z},
           {"logits": dz}, errs)

    hs = r.normal(size=(6, 5))
    ht = r.normal(size=(4, 5)) + 0.3
    _, gs, gt = L.adaptation_loss(hs, ht)
    _check("mmd", lambda: L.adaptation_loss(hs, ht)[0], {"h_s": hs, "h_t": ht},
           {"h_s": gs, "h_t": gt}, errs)
    return errs


MICRO_ARCH = ArchConfig(channels=2, window=30, conv=[ConvSpec(5, 3, 3, 2), ConvSpec(3, 3, 2, 2)],
                        lstm_hidden=4, fc1_width=5, n_classes=3, keep_prob=0.8)


def check_network(seed: int, mu: float = 0.7, per_tensor: int | None = 12,
                  arch: ArchConfig = MICRO_ARCH) -> dict[str, float]:
    """Full joint objective: gradients of every parameter tensor.

    ``per_tensor`` entries are sampled from each tensor (all when None).
    Dropout is active with a mask that is fixed across evaluations.
    """
    r = np.random.default_rng(seed)
    params = init_network(arch, seed)
    for k in params:
        params[k] = params[k] + 0.1 * r.normal(size=params[k].shape)
    xs = r.normal(size=(4, arch.window, arch.channels))
    ys = r.integers(0, arch.n_classes, size=4)
    xt = r.normal(size=(5, arch.window, arch.channels)) + 0.5

    def f():
        return loss_and_grads(params, arch, xs, ys, xt, mu, Rng(seed).fork("drop"))[0]["total"]

    _, grads = loss_and_grads(params, arch, xs, ys, xt, mu, Rng(seed).fork("drop"))
    errs = {}
    for k, p in params.items():
        all_idx = list(np.ndindex(p.shape))
        if per_tensor is not None and len(all_idx) > per_tensor:
            pick = r.choice(len(all_idx), size=per_tensor, replace=False)
            all_idx = [all_idx[i] for i in sorted(pick)]
        num = numeric_grad(f, p, all_idx)
        errs[f"network:{k}"] = rel_error(num, grads[k], all_idx)
    return errs
