"""Differentiable neural-network kernels with analytic backward rules.

Sequence kernels accept ``(T, C)`` or batched ``(B, T, C)`` inputs.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

from .errors import DimensionError, SequenceTooShortError, UninitializedStatsError
from .tensor import Tensor, as_array

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)


def _batched(x):
    """View a (T, C) array as (1, T, C); return the view and an undo flag."""
    if x.ndim == 2:
        return x[None], True
    if x.ndim != 3:
        raise DimensionError(f"expected (T, C) or (B, T, C), got shape {x.shape}")
    return x, False


# -- activations -----------------------------------------------------------

def relu(x):
    xd = x.data
    return Tensor.from_op(np.maximum(xd, 0.0), (x,), lambda g: (g * (xd > 0),), "relu")


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x):
    s = _sigmoid(x.data)
    return Tensor.from_op(s, (x,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def swish(x):
    xd = x.data
    s = _sigmoid(xd)
    return Tensor.from_op(xd * s, (x,), lambda g: (g * (s + xd * s * (1.0 - s)),), "swish")


def gelu(x):
    """Exact GELU, x * Phi(x)."""
    xd = x.data
    cdf = 0.5 * (1.0 + erf(xd / _SQRT2))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * xd * xd)
    return Tensor.from_op(xd * cdf, (x,), lambda g: (g * (cdf + xd * pdf),), "gelu")


def glu(x, axis=-1):
    """First half of ``axis`` gated by the sigmoid of the second half."""
    xd = x.data
    n = xd.shape[axis]
    if n % 2:
        raise DimensionError(f"glu needs an even channel count, got {n}")
    a, b = np.split(xd, 2, axis=axis)
    s = _sigmoid(b)

    def backward(g):
        return (np.concatenate([g * s, g * a * s * (1.0 - s)], axis=axis),)

    return Tensor.from_op(a * s, (x,), backward, "glu")


# -- normalisations ----------------------------------------------------------

def softmax(x, axis=-1):
    xd = x.data
    z = np.exp(xd - xd.max(axis=axis, keepdims=True))
    p = z / z.sum(axis=axis, keepdims=True)

    def backward(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor.from_op(p, (x,), backward, "softmax")


def softmax_rows(x):
    return softmax(x, axis=-1)


def log_softmax(x, axis=-1):
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    p = np.exp(out)

    def backward(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor.from_op(out, (x,), backward, "log_softmax")


def layer_norm(x, gain, bias, eps=1e-5):
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    centered = xd - mu
    inv = 1.0 / np.sqrt((centered ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv
    gd = as_array(gain)

    def backward(g):
        dxhat = g * gd
        dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(xd.ndim - 1))
        return dx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return Tensor.from_op(xhat * gd + as_array(bias), (x, gain, bias), backward, "layer_norm")


class BatchNormState:
    """Running statistics of one batch-norm layer."""

    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps
        self.num_batches = 0

    @property
    def initialized(self):
        return self.num_batches > 0

    def update(self, mean, var_unbiased):
        m = self.momentum
        self.running_mean = (1 - m) * self.running_mean + m * mean
        self.running_var = (1 - m) * self.running_var + m * var_unbiased
        self.num_batches += 1


def batch_norm1d(x, gain, bias, state, training, mask=None):
    """Normalise channels using statistics pooled over batch and time.

    ``mask`` is a ``(B, T, 1)`` array of valid positions; padded positions
    neither contribute to the statistics nor receive gradient.
    """
    xd, squeeze = _batched(x.data)
    gd, bd = as_array(gain), as_array(bias)
    m = np.ones(xd.shape[:2] + (1,)) if mask is None else np.asarray(mask, dtype=np.float64)
    if m.ndim == 2:
        m = m[None]
    count = m.sum()
    if training:
        if count < 2:
            raise DimensionError("training-mode batch norm needs at least 2 valid frames")
        mu = (xd * m).sum(axis=(0, 1)) / count
        centered = (xd - mu) * m
        var = (centered ** 2).sum(axis=(0, 1)) / count
        inv = 1.0 / np.sqrt(var + state.eps)
        xhat = centered * inv
        state.update(mu, var * count / (count - 1))

        def backward(g):
            g3 = g[None] if squeeze else g
            dxhat = g3 * gd * m
            mean_d = dxhat.sum(axis=(0, 1)) / count
            mean_dx = (dxhat * xhat).sum(axis=(0, 1)) / count
            dx = inv * (dxhat - mean_d - xhat * mean_dx) * m
            dgain = (g3 * xhat).sum(axis=(0, 1))
            dbias = (g3 * m).sum(axis=(0, 1))
            return (dx[0] if squeeze else dx), dgain, dbias
    else:
        if not state.initialized:
            raise UninitializedStatsError("batch norm evaluated before any training-mode update")
        inv = 1.0 / np.sqrt(state.running_var + state.eps)
        xhat = (xd - state.running_mean) * inv * m

        def backward(g):
            g3 = g[None] if squeeze else g
            dx = g3 * gd * inv * m
            return (dx[0] if squeeze else dx), (g3 * xhat).sum(axis=(0, 1)), (g3 * m).sum(axis=(0, 1))

    out = (xhat * gd + bd) * m
    if squeeze:
        out = out[0]
    return Tensor.from_op(out, (x, gain, bias), backward, "batch_norm1d")


# -- temporal convolution and pooling ----------------------------------------

def conv_output_length(t, k, stride=1, padding=0):
    return (t + 2 * padding - k) // stride + 1


def _resolve_padding(padding, k):
    if padding == "same":
        if k % 2 == 0:
            raise DimensionError(f"'same' padding needs an odd kernel, got {k}")
        return (k - 1) // 2
    if padding == "valid":
        return 0
    return int(padding)


def conv1d(x, kernels, bias=None, stride=1, padding="same"):
    """1-D convolution; ``kernels`` has shape ``(k, C_in, C_out)``."""
    xd, squeeze = _batched(x.data)
    wd = as_array(kernels)
    k, cin, cout = wd.shape
    if xd.shape[-1] != cin:
        raise DimensionError(f"conv1d expects {cin} input channels, got {xd.shape[-1]}")
    if stride < 1:
        raise DimensionError("stride must be >= 1")
    p = _resolve_padding(padding, k)
    B, T, _ = xd.shape
    t_out = conv_output_length(T, k, stride, p)
    if t_out < 1:
        raise SequenceTooShortError(f"sequence of length {T} too short for kernel {k}")
    xp = np.pad(xd, ((0, 0), (p, p), (0, 0)))
    span = stride * (t_out - 1) + 1
    cols = np.stack([xp[:, j:j + span:stride, :] for j in range(k)], axis=2)
    cols = cols.reshape(B, t_out, k * cin)
    wmat = wd.reshape(k * cin, cout)
    out = cols @ wmat
    if bias is not None:
        out = out + as_array(bias)

    def backward(g):
        g3 = g[None] if squeeze else g
        gw = np.tensordot(cols, g3, axes=([0, 1], [0, 1])).reshape(k, cin, cout)
        gcols = (g3 @ wmat.T).reshape(B, t_out, k, cin)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, j:j + span:stride, :] += gcols[:, :, j, :]
        gx = gxp[:, p:p + T, :]
        gx = gx[0] if squeeze else gx
        gb = g3.sum(axis=(0, 1)) if bias is not None else None
        return gx, gw, gb

    if squeeze:
        out = out[0]
    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor.from_op(out, parents, backward, "conv1d")


def depthwise_conv1d(x, kernels, bias=None, padding="same"):
    """Per-channel convolution; ``kernels`` has shape ``(k, C)``."""
    xd, squeeze = _batched(x.data)
    wd = as_array(kernels)
    k, c = wd.shape
    if xd.shape[-1] != c:
        raise DimensionError(f"depthwise conv expects {c} channels, got {xd.shape[-1]}")
    p = _resolve_padding(padding, k)
    B, T, _ = xd.shape
    t_out = conv_output_length(T, k, 1, p)
    if t_out < 1:
        raise SequenceTooShortError(f"sequence of length {T} too short for kernel {k}")
    xp = np.pad(xd, ((0, 0), (p, p), (0, 0)))
    out = np.zeros((B, t_out, c))
    for j in range(k):
        out += xp[:, j:j + t_out, :] * wd[j]
    if bias is not None:
        out = out + as_array(bias)

    def backward(g):
        g3 = g[None] if squeeze else g
        gxp = np.zeros_like(xp)
        gw = np.empty_like(wd)
        for j in range(k):
            gxp[:, j:j + t_out, :] += g3 * wd[j]
            gw[j] = (xp[:, j:j + t_out, :] * g3).sum(axis=(0, 1))
        gx = gxp[:, p:p + T, :]
        gx = gx[0] if squeeze else gx
        gb = g3.sum(axis=(0, 1)) if bias is not None else None
        return gx, gw, gb

    if squeeze:
        out = out[0]
    parents = (x, kernels) if bias is None else (x, kernels, bias)
    return Tensor.from_op(out, parents, backward, "depthwise_conv1d")


def maxpool1d(x, k=2, stride=2):
    """Channel-wise max over time windows; ties route gradient to the earliest frame."""
    xd, squeeze = _batched(x.data)
    B, T, C = xd.shape
    if T < k:
        raise SequenceTooShortError(f"sequence of length {T} shorter than pool window {k}")
    t_out = (T - k) // stride + 1
    span = stride * (t_out - 1) + 1
    windows = np.stack([xd[:, j:j + span:stride, :] for j in range(k)], axis=2)
    arg = windows.argmax(axis=2)
    out = np.take_along_axis(windows, arg[:, :, None, :], axis=2)[:, :, 0, :]

    def backward(g):
        g3 = g[None] if squeeze else g
        gx = np.zeros_like(xd)
        src = arg + (np.arange(t_out) * stride)[None, :, None]
        bi = np.broadcast_to(np.arange(B)[:, None, None], src.shape)
        ci = np.broadcast_to(np.arange(C)[None, None, :], src.shape)
        np.add.at(gx, (bi, src, ci), g3)
        return (gx[0] if squeeze else gx,)

    if squeeze:
        out = out[0]
    return Tensor.from_op(out, (x,), backward, "maxpool1d")


def take_frames(x, index):
    """Gather frames: ``out[b, t] = x[b, index[b, t]]`` for a ``(B, T')`` index."""
    xd = x.data
    B = xd.shape[0]
    bi = np.arange(B)[:, None]
    out = xd[bi, index]

    def backward(g):
        gx = np.zeros_like(xd)
        np.add.at(gx, (np.broadcast_to(bi, index.shape), index), g)
        return (gx,)

    return Tensor.from_op(out, (x,), backward, "take_frames")


def dropout(x, p, rng, training):
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.data.shape) >= p) / (1.0 - p)
    return Tensor.from_op(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


def masked(x, mask):
    """Zero padded positions; ``mask`` broadcasts against ``x``."""
    if mask is None:
        return x
    return x * mask


def mean_all(x):
    return x.sum() * (1.0 / x.data.size)
