"""Multi-scale fusion transformer.

Input features pass through an attention-weights block (projection plus one
self-attention layer) giving a context stream. Joint attention then takes
queries and keys from the raw features and values from that context. A
dual-path conv encoder runs a full-rate main path next to a 2x max-pooled
auxiliary path; the auxiliary output is repeated back to full rate and
concatenated on channels before a pre-norm transformer and an MLP head.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import functional as F
from ..errors import ConfigError, ContractViolation, SequenceTooShortError
from ..nn import (Dropout, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention,
                  length_mask, positional_encoding)
from ..tensor import concat
from .base import ConvStage, SequenceModel, as_batch

INPUT_DIM = 172


@dataclass
class FusionConfig:
    d_model: int = 144
    attn_heads: int = 4
    n_transformer_blocks: int = 4
    main_channels: tuple = (144, 144)
    aux_channels: tuple = (144, 144)
    conv_kernel: int = 3
    ffn_expansion: int = 4
    mlp_hidden: int = 288
    dropout: float = 0.2
    body_dropout: float = 0.1
    input_dim: int = INPUT_DIM

    def __post_init__(self):
        self.main_channels = tuple(int(c) for c in self.main_channels)
        self.aux_channels = tuple(int(c) for c in self.aux_channels)
        if self.d_model % self.attn_heads:
            raise ConfigError("d_model must be divisible by attn_heads")
        if self.d_ms % self.attn_heads:
            raise ConfigError("fused width must be divisible by attn_heads")
        if self.d_ms % 2:
            raise ConfigError("fused width must be even for sinusoidal encodings")
        if self.conv_kernel % 2 == 0:
            raise ConfigError("conv kernel must be odd")
        dims = (self.d_model, self.attn_heads, self.n_transformer_blocks, self.mlp_hidden,
                self.ffn_expansion, self.input_dim) + self.main_channels + self.aux_channels
        if not self.main_channels or not self.aux_channels or min(dims) < 1:
            raise ConfigError("all dimensions must be >= 1")

    @property
    def d_ms(self):
        return self.main_channels[-1] + self.aux_channels[-1]

    @classmethod
    def desk(cls, **overrides):
        base = dict(d_model=64, attn_heads=4, n_transformer_blocks=2, main_channels=(64, 64),
                    aux_channels=(64, 64), mlp_hidden=128, ffn_expansion=2)
        base.update(overrides)
        return cls(**base)

    def to_dict(self):
        d = asdict(self)
        d["main_channels"] = list(self.main_channels)
        d["aux_channels"] = list(self.aux_channels)
        return d


class AttentionWeightsBlock(Module):
    """Projection to d_model, then one post-norm self-attention layer."""

    def __init__(self, cfg, rng):
        self.proj = Linear(cfg.input_dim, cfg.d_model, rng)
        self.attn = MultiHeadAttention(cfg.d_model, cfg.d_model, cfg.d_model, cfg.attn_heads, rng)
        self.drop = Dropout(cfg.body_dropout, rng)
        self.norm = LayerNorm(cfg.d_model)

    def forward(self, x, mask=None):
        p = self.proj(x)
        return self.norm(p + self.drop(self.attn(p, mask=mask)))


class JointAttention(Module):
    """Cross-attention: Q and K from the raw features, V from the context stream."""

    def __init__(self, cfg, rng):
        self.attn = MultiHeadAttention(cfg.input_dim, cfg.d_model, cfg.d_model, cfg.attn_heads, rng)

    @property
    def last_weights(self):
        return self.attn.last_weights

    def forward(self, x, h_att, mask=None):
        if x.shape[:-1] != h_att.shape[:-1]:
            raise ContractViolation(f"joint attention inputs disagree on length: {x.shape} vs {h_att.shape}")
        return self.attn(x, h_att, mask=mask)


def upsample_index(aux_lengths, lengths, T):
    """Nearest-repeat map: output frame t copies aux frame min(t // 2, aux_len - 1)."""
    t = np.arange(T)[None, :]
    idx = np.minimum(t // 2, np.maximum(aux_lengths[:, None] - 1, 0))
    return np.where(t < lengths[:, None], idx, 0)


class DualPathEncoder(Module):
    def __init__(self, cfg, rng):
        k = cfg.conv_kernel
        main = (cfg.d_model,) + cfg.main_channels
        aux = (cfg.d_model,) + cfg.aux_channels
        self.main = [ConvStage(main[i], main[i + 1], k, rng) for i in range(len(main) - 1)]
        self.aux = [ConvStage(aux[i], aux[i + 1], k, rng) for i in range(len(aux) - 1)]
        self.last_aux_lengths = None

    def forward(self, a, lengths):
        """Returns the fused ``(B, T, D_ms)`` stream; pool lengths go to ``last_aux_lengths``."""
        lengths = np.asarray(lengths)
        if lengths.min() < 2:
            raise SequenceTooShortError("dual-path encoder needs at least 2 frames")
        T = a.shape[1]
        mask = length_mask(lengths, T)
        m = a * mask
        for stage in self.main:
            m = stage(m, mask)

        h = self.aux[0](a * mask, mask)
        h = F.maxpool1d(h, 2, 2)
        aux_lengths = lengths // 2
        aux_mask = length_mask(aux_lengths, h.shape[1])
        h = h * aux_mask
        for stage in self.aux[1:]:
            h = stage(h, aux_mask)
        self.last_aux_lengths = aux_lengths
        up = F.take_frames(h, upsample_index(aux_lengths, lengths, T)) * mask
        return concat([m, up], axis=-1)


class TransformerBlock(Module):
    """Pre-norm: x + MHSA(LN(x)), then x + FFN(LN(x))."""

    def __init__(self, d, heads, hidden, rng, dropout):
        self.attn_norm = LayerNorm(d)
        self.attn = MultiHeadAttention(d, d, d, heads, rng)
        self.drop = Dropout(dropout, rng)
        self.ffn_norm = LayerNorm(d)
        self.ffn = FeedForward(d, hidden, rng, F.gelu, dropout)

    def residual_outputs(self):
        return [self.attn.w_o, self.ffn.fc2]

    def forward(self, x, mask=None):
        x = x + self.drop(self.attn(self.attn_norm(x), mask=mask))
        return x + self.ffn(self.ffn_norm(x))


class TransformerEncoder(Module):
    def __init__(self, cfg, rng):
        d = cfg.d_ms
        self.d = d
        self.blocks = [TransformerBlock(d, cfg.attn_heads, cfg.ffn_expansion * d, rng, cfg.body_dropout)
                       for _ in range(cfg.n_transformer_blocks)]

    def forward(self, f, mask=None):
        squeeze = f.ndim == 2
        if squeeze:
            f = f.reshape(1, *f.shape)
        h = f + positional_encoding(f.shape[1], self.d)
        for block in self.blocks:
            h = block(h, mask)
        if squeeze:
            h = h.reshape(*h.shape[1:])
        return h


class MLPHead(Module):
    def __init__(self, d, hidden, n_out, rng, dropout):
        self.fc1 = Linear(d, hidden, rng)
        self.drop = Dropout(dropout, rng)
        self.fc2 = Linear(hidden, n_out, rng)

    def forward(self, h):
        return self.fc2(self.drop(F.gelu(self.fc1(h))))


class FusionModel(SequenceModel):
    kind = "fusion_us"

    def __init__(self, cfg, vocab_size, seed=0):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        self.vocab_size = vocab_size
        self.context = AttentionWeightsBlock(cfg, rng)
        self.joint = JointAttention(cfg, rng)
        self.dual_path = DualPathEncoder(cfg, rng)
        self.transformer = TransformerEncoder(cfg, rng)
        self.head = MLPHead(cfg.d_ms, cfg.mlp_hidden, vocab_size + 1, rng, cfg.dropout)

    def output_lengths(self, lengths):
        return np.asarray(lengths)

    def forward(self, x, lengths=None):
        squeeze = not isinstance(x, (list, tuple)) and np.ndim(x.data if hasattr(x, "data") else x) == 2
        x, lengths, _ = as_batch(x, lengths)
        if lengths.min() < 2:
            raise SequenceTooShortError("fusion model needs sequences of at least 2 frames")
        mask = length_mask(lengths, x.shape[1])
        h_att = self.context(x, mask)
        a = self.joint(x, h_att, mask)
        f = self.dual_path(a, lengths)
        h = self.transformer(f, mask)
        logits = self.head(h)
        if squeeze:
            logits = logits.reshape(*logits.shape[1:])
        return logits, lengths
