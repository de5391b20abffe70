"""Parameterised layers built on the functional kernels."""

from __future__ import annotations

import math

import numpy as np

from . import functional as F
from .errors import DimensionError
from .tensor import Tensor, matmul


def glorot(rng, shape, fan_in, fan_out):
    a = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape)


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


class Module:
    """Container with deterministic, dotted parameter naming.

    Parameters are ``Tensor`` attributes with ``requires_grad``; children are
    ``Module`` attributes or lists of modules. Insertion order defines naming
    order, which the checkpoint format relies on.
    """

    training = True

    def named_parameters(self, prefix=""):
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                yield full, value
            elif isinstance(value, Module):
                yield from value.named_parameters(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def named_buffers(self, prefix=""):
        """Non-trainable state (batch-norm running statistics)."""
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(value, F.BatchNormState):
                yield f"{full}.running_mean", value, "running_mean"
                yield f"{full}.running_var", value, "running_var"
                yield f"{full}.num_batches", value, "num_batches"
            elif isinstance(value, Module):
                yield from value.named_buffers(full + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_buffers(f"{full}.{i}.")

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self):
        return sum(p.data.size for p in self.parameters())

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Linear(Module):
    def __init__(self, d_in, d_out, rng, bias=True):
        self.weight = parameter(glorot(rng, (d_in, d_out), d_in, d_out))
        self.bias = parameter(np.zeros(d_out)) if bias else None

    def forward(self, x):
        out = matmul(x, self.weight)
        return out + self.bias if self.bias is not None else out


class Conv1d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, bias=True):
        if kernel % 2 == 0:
            raise DimensionError("conv kernels must be odd for same padding")
        self.weight = parameter(glorot(rng, (kernel, c_in, c_out), kernel * c_in, kernel * c_out))
        self.bias = parameter(np.zeros(c_out)) if bias else None
        self.stride = stride

    @property
    def kernel(self):
        return self.weight.shape[0]

    def output_lengths(self, lengths):
        p = (self.kernel - 1) // 2
        return (np.asarray(lengths) + 2 * p - self.kernel) // self.stride + 1

    def forward(self, x):
        return F.conv1d(x, self.weight, self.bias, stride=self.stride, padding="same")


class DepthwiseConv1d(Module):
    def __init__(self, channels, kernel, rng, bias=True):
        if kernel % 2 == 0:
            raise DimensionError("depthwise kernels must be odd")
        self.weight = parameter(glorot(rng, (kernel, channels), kernel, kernel))
        self.bias = parameter(np.zeros(channels)) if bias else None

    def forward(self, x):
        return F.depthwise_conv1d(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        self.gain = parameter(np.ones(d))
        self.bias = parameter(np.zeros(d))
        self.eps = eps

    def forward(self, x):
        return F.layer_norm(x, self.gain, self.bias, self.eps)


class BatchNorm1d(Module):
    def __init__(self, channels, momentum=0.1, eps=1e-5):
        self.gain = parameter(np.ones(channels))
        self.bias = parameter(np.zeros(channels))
        self.state = F.BatchNormState(channels, momentum, eps)

    def forward(self, x, mask=None):
        return F.batch_norm1d(x, self.gain, self.bias, self.state, self.training, mask)


class Dropout(Module):
    def __init__(self, p, rng):
        self.p = p
        self.rng = rng

    def forward(self, x):
        return F.dropout(x, self.p, self.rng, self.training)


def key_padding_bias(mask):
    """Additive attention bias, ``(B, 1, 1, T)``, masking padded keys."""
    if mask is None:
        return None
    valid = np.asarray(mask)[..., 0]
    return np.where(valid > 0, 0.0, -1e9)[:, None, None, :]


class MultiHeadAttention(Module):
    """Scaled dot-product attention with ``heads`` heads.

    Queries and keys are projected from ``qk_source``, values from
    ``v_source`` (self-attention passes the same tensor for both). The
    Q/K/V projections carry no bias; the output projection does.
    """

    def __init__(self, d_qk_in, d_v_in, d_model, heads, rng):
        if d_model % heads:
            raise DimensionError(f"d_model {d_model} not divisible by {heads} heads")
        self.heads = heads
        self.d_model = d_model
        self.w_q = Linear(d_qk_in, d_model, rng, bias=False)
        self.w_k = Linear(d_qk_in, d_model, rng, bias=False)
        self.w_v = Linear(d_v_in, d_model, rng, bias=False)
        self.w_o = Linear(d_model, d_model, rng)
        self.last_weights = None

    def _split(self, x):
        B, T, _ = x.shape
        return x.reshape(B, T, self.heads, self.d_model // self.heads).transpose(0, 2, 1, 3)

    def forward(self, qk_source, v_source=None, mask=None):
        if v_source is None:
            v_source = qk_source
        squeeze = qk_source.ndim == 2
        if squeeze:
            qk_source = qk_source.reshape(1, *qk_source.shape)
            v_source = v_source.reshape(1, *v_source.shape)
        if qk_source.shape[:2] != v_source.shape[:2]:
            raise DimensionError("query/key and value sources must share batch and time")
        B, T, _ = qk_source.shape
        q = self._split(self.w_q(qk_source))
        k = self._split(self.w_k(qk_source))
        v = self._split(self.w_v(v_source))
        scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(self.d_model // self.heads))
        bias = key_padding_bias(mask)
        if bias is not None:
            scores = scores + bias
        weights = F.softmax(scores, axis=-1)
        self.last_weights = weights.data
        ctx = matmul(weights, v).transpose(0, 2, 1, 3).reshape(B, T, self.d_model)
        out = self.w_o(ctx)
        if squeeze:
            out = out.reshape(T, self.d_model)
        return out


class FeedForward(Module):
    def __init__(self, d, hidden, rng, activation, dropout=0.0):
        self.fc1 = Linear(d, hidden, rng)
        self.fc2 = Linear(hidden, d, rng)
        self.activation = activation
        self.drop = Dropout(dropout, rng)

    def forward(self, x):
        return self.drop(self.fc2(self.drop(self.activation(self.fc1(x)))))


def positional_encoding(T, d_model):
    """Sinusoidal table: sin on even channels, cos on odd, shape ``(T, d_model)``."""
    if d_model % 2:
        raise DimensionError("positional encoding needs an even model width")
    pos = np.arange(T)[:, None]
    freq = 1.0 / 10000.0 ** (np.arange(0, d_model, 2) / d_model)
    pe = np.zeros((T, d_model))
    pe[:, 0::2] = np.sin(pos * freq)
    pe[:, 1::2] = np.cos(pos * freq)
    return pe


def length_mask(lengths, T):
    """``(B, T, 1)`` float mask of valid frames."""
    lengths = np.asarray(lengths)
    return (np.arange(T)[None, :] < lengths[:, None]).astype(np.float64)[..., None]
