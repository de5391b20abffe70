"""Signer-invariant conformer: conv encoder, sinusoidal PE, conformer blocks, LN + linear head."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import functional as F
from ..errors import ConfigError
from ..nn import (BatchNorm1d, DepthwiseConv1d, Dropout, FeedForward, LayerNorm, Linear,
                  Module, MultiHeadAttention, length_mask, positional_encoding)
from .base import ConvStage, SequenceModel, as_batch

INPUT_DIM = 172


@dataclass
class ConformerConfig:
    d_model: int = 144
    n_blocks: int = 4
    n_heads: int = 4
    conv_kernel: int = 15
    ffn_expansion: int = 4
    encoder_channels: tuple = (128, 144)
    encoder_stride: int = 1
    encoder_kernel: int = 3
    dropout: float = 0.1
    input_dim: int = INPUT_DIM

    def __post_init__(self):
        self.encoder_channels = tuple(int(c) for c in self.encoder_channels)
        if self.d_model % self.n_heads:
            raise ConfigError("d_model must be divisible by n_heads")
        if self.conv_kernel % 2 == 0 or self.encoder_kernel % 2 == 0:
            raise ConfigError("convolution kernels must be odd")
        if self.d_model % 2:
            raise ConfigError("d_model must be even for sinusoidal encodings")
        if not self.encoder_channels or self.encoder_channels[-1] != self.d_model:
            raise ConfigError("last encoder channel count must equal d_model")
        dims = (self.d_model, self.n_blocks, self.n_heads, self.ffn_expansion,
                self.encoder_stride, self.input_dim) + self.encoder_channels
        if min(dims) < 1:
            raise ConfigError("all dimensions must be >= 1")

    @property
    def d_k(self):
        return self.d_model // self.n_heads

    @classmethod
    def desk(cls, **overrides):
        """Small preset for CPU-scale experiments."""
        base = dict(d_model=64, n_blocks=2, n_heads=4, conv_kernel=7,
                    encoder_channels=(64, 64), dropout=0.1)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        return d


class TemporalEncoder(Module):
    def __init__(self, cfg, rng):
        chans = (cfg.input_dim,) + cfg.encoder_channels
        self.stages = [ConvStage(chans[i], chans[i + 1], cfg.encoder_kernel, rng,
                                 stride=cfg.encoder_stride if i == 0 else 1)
                       for i in range(len(chans) - 1)]

    def output_lengths(self, lengths):
        for s in self.stages:
            lengths = s.output_lengths(lengths)
        return lengths

    def forward(self, x, lengths):
        for s in self.stages:
            lengths = s.output_lengths(lengths)
            x = s.conv(x)
            mask = length_mask(lengths, x.shape[1])
            x = F.relu(s.norm(x, mask)) * mask
        return x, lengths


class ConvModule(Module):
    """pointwise (d -> 2d) -> GLU -> depthwise conv -> batch norm -> swish -> pointwise."""

    def __init__(self, d, kernel, rng, dropout):
        self.pointwise_in = Linear(d, 2 * d, rng)
        self.depthwise = DepthwiseConv1d(d, kernel, rng, bias=False)
        self.norm = BatchNorm1d(d)
        self.pointwise_out = Linear(d, d, rng)
        self.drop = Dropout(dropout, rng)

    def forward(self, x, mask):
        h = F.glu(self.pointwise_in(x)) * mask
        h = F.swish(self.norm(self.depthwise(h), mask))
        return self.drop(self.pointwise_out(h))


class ConformerBlock(Module):
    """Macaron block: half FFN, self-attention, conv module, half FFN, final LN."""

    def __init__(self, cfg, rng):
        d = cfg.d_model
        hidden = cfg.ffn_expansion * d
        self.ffn1_norm = LayerNorm(d)
        self.ffn1 = FeedForward(d, hidden, rng, F.swish, cfg.dropout)
        self.attn_norm = LayerNorm(d)
        self.attn = MultiHeadAttention(d, d, d, cfg.n_heads, rng)
        self.attn_drop = Dropout(cfg.dropout, rng)
        self.conv_norm = LayerNorm(d)
        self.conv = ConvModule(d, cfg.conv_kernel, rng, cfg.dropout)
        self.ffn2_norm = LayerNorm(d)
        self.ffn2 = FeedForward(d, hidden, rng, F.swish, cfg.dropout)
        self.out_norm = LayerNorm(d)

    def residual_outputs(self):
        """Final projections of every residual branch."""
        return [self.ffn1.fc2, self.attn.w_o, self.conv.pointwise_out, self.ffn2.fc2]

    def forward(self, z, mask=None):
        squeeze = z.ndim == 2
        if squeeze:
            z = z.reshape(1, *z.shape)
        if mask is None:
            mask = np.ones(z.shape[:2] + (1,))
        z = z + self.ffn1(self.ffn1_norm(z)) * 0.5
        z = z + self.attn_drop(self.attn(self.attn_norm(z), mask=mask))
        z = z + self.conv(self.conv_norm(z), mask)
        z = z + self.ffn2(self.ffn2_norm(z)) * 0.5
        out = self.out_norm(z)
        if squeeze:
            out = out.reshape(*out.shape[1:])
        return out


class Classifier(Module):
    def __init__(self, d, n_out, rng):
        self.norm = LayerNorm(d)
        self.proj = Linear(d, n_out, rng)

    def forward(self, h):
        return self.proj(self.norm(h))


class ConformerModel(SequenceModel):
    kind = "conformer_si"

    def __init__(self, cfg, vocab_size, seed=0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.encoder = TemporalEncoder(cfg, rng)
        self.drop = Dropout(cfg.dropout, rng)
        self.blocks = [ConformerBlock(cfg, rng) for _ in range(cfg.n_blocks)]
        self.classifier = Classifier(cfg.d_model, vocab_size + 1, rng)

    def output_lengths(self, lengths):
        return self.encoder.output_lengths(np.asarray(lengths))

    def encode(self, x, lengths=None):
        """Encoder + PE + conformer blocks; returns ``(H, lengths)``."""
        x, lengths, _ = as_batch(x, lengths)
        h, lengths = self.encoder(x, lengths)
        T = h.shape[1]
        mask = length_mask(lengths, T)
        h = self.drop(h + positional_encoding(T, self.cfg.d_model))
        for block in self.blocks:
            h = block(h, mask)
        return h, lengths

    def forward(self, x, lengths=None):
        squeeze = not isinstance(x, (list, tuple)) and np.ndim(x.data if hasattr(x, "data") else x) == 2
        h, lengths = self.encode(x, lengths)
        logits = self.classifier(h)
        if squeeze:
            logits = logits.reshape(*logits.shape[1:])
        return logits, lengths
