"""Forward and backward passes of the individual TNNAR layers.

Every ``*_forward`` returns ``(out, cache)`` and the matching ``*_backward``
turns an upstream gradient plus that cache into input and parameter grads.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..numeric import DimensionError, Rng, Tensor


# ------------------------------------------------------------------ conv


def conv_forward(x: Tensor, kernel: Tensor, bias: Tensor) -> tuple[Tensor, tuple]:
    """Valid 1-D cross-correlation applied per channel.

    ``x`` is N x C x Din x L with Din either 1 (every kernel sees the raw
    channel) or equal to the kernel count D (kernel d sees feature map d).
    Output is N x C x D x (L - K + 1).
    """
    D, K = kernel.shape
    L = x.shape[-1]
    if L < K:
        raise DimensionError(f"sequence length {L} shorter than kernel length {K}")
    if x.shape[2] not in (1, D):
        raise DimensionError(f"input depth {x.shape[2]} incompatible with {D} kernels")
    win = sliding_window_view(x, K, axis=-1)  # N C Din Lout K
    if x.shape[2] == 1:
        out = np.einsum("nclk,dk->ncdl", win[:, :, 0], kernel)
    else:
        out = np.einsum("ncdlk,dk->ncdl", win, kernel)
    out += bias[None, None, :, None]
    return out, (x, kernel)


def conv_backward(dout: Tensor, cache: tuple, need_dx: bool = True):
    x, kernel = cache
    D, K = kernel.shape
    win = sliding_window_view(x, K, axis=-1)
    depthwise = x.shape[2] != 1
    if depthwise:
        dk = np.einsum("ncdl,ncdlk->dk", dout, win)
    else:
        dk = np.einsum("ncdl,nclk->dk", dout, win[:, :, 0])
    db = dout.sum(axis=(0, 1, 3))
    dx = None
    if need_dx:
        dx = np.zeros_like(x)
        Lout = dout.shape[-1]
        if depthwise:
            for k in range(K):
                dx[..., k:k + Lout] += dout * kernel[None, None, :, k, None]
        else:
            for k in range(K):
                dx[:, :, 0, k:k + Lout] += np.einsum("ncdl,d->ncl", dout, kernel[:, k])
    return dx, dk, db


def relu_forward(x: Tensor) -> tuple[Tensor, Tensor]:
    return np.maximum(x, 0.0), x > 0


def relu_backward(dout: Tensor, mask: Tensor) -> Tensor:
    return dout * mask


def pool_output_len(L: int, pool: int, stride: int) -> int:
    p = min(pool, L)
    return (L - p) // stride + 1


def maxpool_forward(x: Tensor, pool: int, stride: int) -> tuple[Tensor, tuple]:
    """Max-pool over the last axis; the window is cut down to L when L < pool."""
    L = x.shape[-1]
    p = min(pool, L)
    win = sliding_window_view(x, p, axis=-1)[..., ::stride, :]
    arg = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, (x.shape, arg, stride)


def maxpool_backward(dout: Tensor, cache: tuple) -> Tensor:
    shape, arg, stride = cache
    L = shape[-1]
    pos = arg + np.arange(arg.shape[-1]) * stride
    lead = int(np.prod(shape[:-1]))
    dx = np.zeros((lead, L))
    rows = np.repeat(np.arange(lead), arg.shape[-1])
    np.add.at(dx, (rows, pos.reshape(-1)), dout.reshape(-1))
    return dx.reshape(shape)


def conv1d_block(x: Tensor, kernel: Tensor, bias: Tensor, pool: int, stride: int):
    """Convolution, ReLU, max-pool. Returns output and a cache for backprop."""
    z, c_conv = conv_forward(x, kernel, bias)
    a, c_relu = relu_forward(z)
    out, c_pool = maxpool_forward(a, pool, stride)
    return out, (c_conv, c_relu, c_pool)


def conv1d_block_backward(dout: Tensor, cache: tuple, need_dx: bool = True):
    c_conv, c_relu, c_pool = cache
    da = maxpool_backward(dout, c_pool)
    dz = relu_backward(da, c_relu)
    return conv_backward(dz, c_conv, need_dx)


# ------------------------------------------------------------------ LSTM

GATES = ("i", "f", "g", "o")  # input, forget, cell candidate, output


def _sigmoid(x: Tensor) -> Tensor:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_forward(x: Tensor, W: Tensor, U: Tensor, b: Tensor) -> tuple[Tensor, tuple]:
    """Run an LSTM over N x T x D inputs from a zero state; return final hidden state.

    ``W`` (4H x D), ``U`` (4H x H) and ``b`` (4H) stack the gates in the
    order input, forget, cell, output.
    """
    N, T, _ = x.shape
    H = U.shape[1]
    if T < 1:
        raise DimensionError("LSTM needs at least one timestep")
    h = np.zeros((N, H))
    c = np.zeros((N, H))
    xw = x @ W.T + b  # N T 4H, input projections for every step at once
    steps = []
    for t in range(T):
        z = xw[:, t] + h @ U.T
        i = _sigmoid(z[:, :H])
        f = _sigmoid(z[:, H:2 * H])
        g = np.tanh(z[:, 2 * H:3 * H])
        o = _sigmoid(z[:, 3 * H:])
        c_prev, h_prev = c, h
        c = f * c_prev + i * g
        tc = np.tanh(c)
        h = o * tc
        steps.append((h_prev, c_prev, i, f, g, o, tc))
    return h, (x, W, U, steps)


def lstm_backward(dh: Tensor, cache: tuple):
    x, W, U, steps = cache
    N, T, D = x.shape
    H = U.shape[1]
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    dx = np.zeros_like(x)
    dc = np.zeros((N, H))
    for t in reversed(range(T)):
        h_prev, c_prev, i, f, g, o, tc = steps[t]
        do = dh * tc
        dc = dc + dh * o * (1.0 - tc * tc)
        di = dc * g
        dg = dc * i
        df = dc * c_prev
        dz = np.concatenate([
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ], axis=1)
        dW += dz.T @ x[:, t]
        dU += dz.T @ h_prev
        db += dz.sum(axis=0)
        dx[:, t] = dz @ W
        dh = dz @ U
        dc = dc * f
    return dx, dW, dU, db


# ------------------------------------------------------------- dense & co


def softmax(z: Tensor) -> Tensor:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def dense(h: Tensor, W: Tensor, b: Tensor, activation: str = "none") -> Tensor:
    """Affine map ``h W^T + b`` followed by relu, softmax or nothing."""
    if h.shape[-1] != W.shape[1]:
        raise DimensionError(f"dense input width {h.shape[-1]} != weight fan-in {W.shape[1]}")
    z = h @ W.T + b
    if activation == "relu":
        return np.maximum(z, 0.0)
    if activation == "softmax":
        return softmax(z)
    if activation == "none":
        return z
    raise ValueError(f"unknown activation {activation!r}")


def dense_backward(dz: Tensor, h: Tensor, W: Tensor):
    return dz @ W, dz.T @ h, dz.sum(axis=0)


def dropout(h: Tensor, keep_prob: float, rng: Rng | None, train: bool = True):
    """Inverted dropout. Returns (output, mask); the mask already includes 1/keep."""
    if not 0.0 < keep_prob <= 1.0:
        raise ValueError(f"keep_prob must lie in (0, 1], got {keep_prob}")
    if not train or keep_prob == 1.0:
        return h, np.ones_like(h)
    mask = (rng.uniform(h.shape) < keep_prob) / keep_prob
    return h * mask, mask


# ----------------------------------------------------------------- losses


def cross_entropy_loss(probs: Tensor, labels: np.ndarray) -> tuple[float, Tensor]:
    """Mean negative log-likelihood and its gradient w.r.t. the pre-softmax logits."""
    n, k = probs.shape
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size and (labels.max() >= k or labels.min() < 0):
        raise ValueError(f"label out of range for {k} classes")
    picked = probs[np.arange(n), labels]
    loss = float(-np.mean(np.log(np.maximum(picked, np.finfo(float).tiny))))
    grad = probs.copy()
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


def adaptation_loss(h_s: Tensor, h_t: Tensor) -> tuple[float, Tensor, Tensor]:
    """Linear-kernel MMD between two activation batches, with both gradients."""
    if h_s.shape[1] != h_t.shape[1]:
        raise DimensionError(f"activation widths differ: {h_s.shape[1]} vs {h_t.shape[1]}")
    delta = h_s.mean(axis=0) - h_t.mean(axis=0)
    loss = float(delta @ delta)
    g_s = np.broadcast_to(2.0 * delta / len(h_s), h_s.shape).copy()
    g_t = np.broadcast_to(-2.0 * delta / len(h_t), h_t.shape).copy()
    return loss, g_s, g_t
