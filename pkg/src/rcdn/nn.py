"""Differentiable network operations: convolutions, pooling, batchnorm,
linear layers, feature concat, hypersphere normalization, cross-entropy.

All image tensors are NCHW, row-major, float64.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import Tensor, record
from .errors import DegenerateBatchError, DimensionError, ValidationError

# rows mapped to the zero vector by l2_normalize since process start
_zero_row_count = 0


def zero_row_warnings():
    return _zero_row_count


def _conv_out_extent(extent, k, stride, pad):
    return (extent + 2 * pad - k) // stride + 1


def conv2d(x, w, b, stride=1, pad=0):
    """Full 2-D convolution (cross-correlation), x: NCHW, w: OIKK, b: O."""
    if stride < 1 or pad < 0:
        raise ValidationError("stride must be >= 1 and pad >= 0")
    n, c, h, wdt = x.data.shape
    o, ci, kh, kw = w.data.shape
    if ci != c:
        raise DimensionError(f"kernel input-channel axis {ci} != input channel axis {c}")
    if b.data.shape != (o,):
        raise DimensionError(f"bias axis {b.data.shape} != output-channel axis ({o},)")
    oh = _conv_out_extent(h, kh, stride, pad)
    ow = _conv_out_extent(wdt, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise DimensionError(f"spatial axes ({h},{wdt}) too small for kernel ({kh},{kw}) "
                             f"stride {stride} pad {pad}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    wm = w.data.reshape(o, c * kh * kw)
    out = (cols @ wm.T + b.data).reshape(n, oh, ow, o).transpose(0, 3, 1, 2)

    def vjp(g):
        gm = g.transpose(0, 2, 3, 1).reshape(n * oh * ow, o)
        gw = (gm.T @ cols).reshape(w.data.shape)
        gb = gm.sum(axis=0)
        gwin = (gm @ wm).reshape(n, oh, ow, c, kh, kw)
        gxp = np.zeros_like(xp)
        for ki in range(kh):
            for kj in range(kw):
                gxp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += \
                    gwin[:, :, :, :, ki, kj].transpose(0, 3, 1, 2)
        gx = gxp[:, :, pad:pad + h, pad:pad + wdt] if pad else gxp
        return gx, gw, gb

    return record(out, (x, w, b), vjp)


def depthwise_conv2d(x, w, stride=1, pad=0):
    """Channel-wise convolution, x: NCHW, w: C1KK; channel i sees only channel i."""
    n, c, h, wdt = x.data.shape
    cw, one, kh, kw = w.data.shape
    if cw != c or one != 1:
        raise DimensionError(f"depthwise kernel channel axis {w.data.shape[:2]} "
                             f"incompatible with input channel axis {c}")
    oh = _conv_out_extent(h, kh, stride, pad)
    ow = _conv_out_extent(wdt, kw, stride, pad)
    if oh < 1 or ow < 1:
        raise DimensionError(f"spatial axes ({h},{wdt}) too small for kernel ({kh},{kw})")

    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ker = w.data[:, 0]  # C,K,K
    out = np.einsum("nchwij,cij->nchw", win, ker)

    def vjp(g):
        gw = np.einsum("nchwij,nchw->cij", win, g)[:, None]
        gwin = np.einsum("nchw,cij->nchwij", g, ker)
        gxp = np.zeros_like(xp)
        for ki in range(kh):
            for kj in range(kw):
                gxp[:, :, ki:ki + stride * oh:stride, kj:kj + stride * ow:stride] += \
                    gwin[:, :, :, :, ki, kj]
        gx = gxp[:, :, pad:pad + h, pad:pad + wdt] if pad else gxp
        return gx, gw

    return record(out, (x, w), vjp)


def pointwise_conv2d(x, w, b):
    """1x1 channel-mixing convolution, w: OC11."""
    if w.data.shape[2:] != (1, 1):
        raise DimensionError(f"pointwise kernel spatial axes must be (1,1), got {w.data.shape[2:]}")
    return conv2d(x, w, b, stride=1, pad=0)


def relu(x):
    mask = x.data > 0.0
    return record(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def maxpool2(x):
    """2x2 max pooling with stride 2; requires even spatial extents."""
    n, c, h, w = x.data.shape
    if h % 2 or w % 2:
        raise DimensionError(f"maxpool2 requires even spatial axes, got ({h},{w})")
    h2, w2 = h // 2, w // 2
    windows = x.data.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5) \
        .reshape(n, c, h2, w2, 4)
    idx = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, idx[..., None], axis=-1)[..., 0]

    def vjp(g):
        gwin = np.zeros_like(windows)
        np.put_along_axis(gwin, idx[..., None], g[..., None], axis=-1)
        gx = gwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        return (gx,)

    return record(out, (x,), vjp)


def global_avg_pool(x):
    """Per-channel spatial mean: NCHW -> NC."""
    n, c, h, w = x.data.shape
    out = x.data.mean(axis=(2, 3))

    def vjp(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.data.shape).copy(),)

    return record(out, (x,), vjp)


class BnRunning:
    """Running-statistics state for one batchnorm layer."""

    def __init__(self, channels):
        self.mean = np.zeros(channels)
        self.var = np.ones(channels)

    def copy(self):
        other = BnRunning(len(self.mean))
        other.mean = self.mean.copy()
        other.var = self.var.copy()
        return other


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def batchnorm2d(x, gamma, beta, running, training, track_stats=True):
    """Per-channel batch normalization over N,H,W.

    Train mode uses batch statistics (population variance) and, when
    ``track_stats``, updates the running buffers with momentum 0.1.  Infer
    mode normalizes with the running buffers.
    """
    n, c, h, w = x.data.shape
    if gamma.data.shape != (c,) or beta.data.shape != (c,):
        raise DimensionError(f"gamma/beta must match channel axis ({c},)")

    if training:
        if n < 2:
            raise DegenerateBatchError("batchnorm train mode requires batch size >= 2")
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
        if track_stats:
            running.mean = (1 - BN_MOMENTUM) * running.mean + BN_MOMENTUM * mean
            running.var = (1 - BN_MOMENTUM) * running.var + BN_MOMENTUM * var
    else:
        mean = running.mean
        var = running.var

    inv_std = 1.0 / np.sqrt(var + BN_EPS)
    xhat = (x.data - mean[None, :, None, None]) * inv_std[None, :, None, None]
    out = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]

    m = n * h * w

    def vjp(g):
        ggamma = (g * xhat).sum(axis=(0, 2, 3))
        gbeta = g.sum(axis=(0, 2, 3))
        gxhat = g * gamma.data[None, :, None, None]
        if training:
            # standard train-mode backward through the batch statistics
            sum_gxhat = gxhat.sum(axis=(0, 2, 3))
            sum_gxhat_xhat = (gxhat * xhat).sum(axis=(0, 2, 3))
            gx = (inv_std[None, :, None, None] / m) * (
                m * gxhat
                - sum_gxhat[None, :, None, None]
                - xhat * sum_gxhat_xhat[None, :, None, None]
            )
        else:
            gx = gxhat * inv_std[None, :, None, None]
        return gx, ggamma, gbeta

    return record(out, (x, gamma, beta), vjp)


def linear(x, w, b):
    """x: NxD @ w: DxE + b: E."""
    if x.data.ndim != 2 or w.data.ndim != 2:
        raise DimensionError("linear expects 2-D input and weight")
    if x.data.shape[1] != w.data.shape[0]:
        raise DimensionError(f"inner axis mismatch: input {x.data.shape[1]} vs weight {w.data.shape[0]}")
    if b.data.shape != (w.data.shape[1],):
        raise DimensionError(f"bias axis {b.data.shape} != ({w.data.shape[1]},)")
    out = x.data @ w.data + b.data

    def vjp(g):
        return g @ w.data.T, x.data.T @ g, g.sum(axis=0)

    return record(out, (x, w, b), vjp)


def concat_features(a, b):
    """Concatenate NxA and NxB feature blocks along axis 1, order preserved."""
    if a.data.shape[0] != b.data.shape[0]:
        raise DimensionError(f"batch axis mismatch: {a.data.shape[0]} vs {b.data.shape[0]}")
    na = a.data.shape[1]
    out = np.concatenate([a.data, b.data], axis=1)
    return record(out, (a, b), lambda g: (g[:, :na], g[:, na:]))


def l2_normalize(x, eps=1e-12):
    """Row-wise z / (||z|| + eps); a zero row maps to a zero row (counted)."""
    global _zero_row_count
    norms = np.sqrt((x.data ** 2).sum(axis=1))
    n_zero = int((norms == 0.0).sum())
    if n_zero:
        _zero_row_count += n_zero
    denom = norms + eps
    out = x.data / denom[:, None]

    def vjp(g):
        safe = np.maximum(norms, 1e-300)
        dot = (x.data * g).sum(axis=1)
        return (g / denom[:, None] - x.data * (dot / (safe * denom ** 2))[:, None],)

    return record(out, (x,), vjp)


def softmax_cross_entropy(logits, labels):
    """Mean over batch of -log softmax(logits)[label], max-subtracted for stability."""
    lab = np.asarray(labels)
    n, k = logits.data.shape
    if lab.shape != (n,):
        raise DimensionError(f"labels axis {lab.shape} != batch axis ({n},)")
    if lab.min() < 0 or lab.max() >= k:
        raise ValidationError(f"labels must lie in [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loglik = shifted[np.arange(n), lab] - logsumexp
    out = -loglik.mean()

    def vjp(g):
        p = np.exp(shifted - logsumexp[:, None])
        p[np.arange(n), lab] -= 1.0
        return (g * p / n,)

    return record(out, (logits,), vjp)
