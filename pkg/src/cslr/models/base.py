from __future__ import annotations

import numpy as np

from .. import functional as F
from ..ctc import greedy_decode, beam_decode
from ..errors import DimensionError
from ..nn import BatchNorm1d, Conv1d, Module
from ..tensor import Tensor, no_grad


def pad_batch(features):
    """Stack variable-length ``(T_i, D)`` arrays into ``(B, T_max, D)`` plus lengths."""
    lengths = np.array([f.shape[0] for f in features], dtype=np.int64)
    D = features[0].shape[1]
    out = np.zeros((len(features), int(lengths.max()), D))
    for b, f in enumerate(features):
        if f.shape[1] != D:
            raise DimensionError("all sequences in a batch need the same feature width")
        out[b, :f.shape[0]] = f
    return out, lengths


def as_batch(x, lengths=None):
    """Normalise model input to a ``(B, T, D)`` tensor and a lengths array."""
    if isinstance(x, (list, tuple)):
        data, lengths = pad_batch([np.asarray(f, dtype=np.float64) for f in x])
        return Tensor(data), lengths, False
    t = x if isinstance(x, Tensor) else Tensor(x)
    squeeze = t.ndim == 2
    if squeeze:
        t = t.reshape(1, *t.shape)
    if lengths is None:
        lengths = np.full(t.shape[0], t.shape[1], dtype=np.int64)
    return t, np.asarray(lengths, dtype=np.int64), squeeze


class ConvStage(Module):
    """conv1d -> batch norm -> ReLU, with padded frames held at zero."""

    def __init__(self, c_in, c_out, kernel, rng, stride=1):
        # the following batch norm cancels any conv bias
        self.conv = Conv1d(c_in, c_out, kernel, rng, stride, bias=False)
        self.norm = BatchNorm1d(c_out)

    def output_lengths(self, lengths):
        return self.conv.output_lengths(lengths)

    def forward(self, x, mask):
        return F.relu(self.norm(self.conv(x), mask)) * mask


class SequenceModel(Module):
    """Shared inference helpers; subclasses implement ``forward`` and ``output_lengths``."""

    kind = None

    def log_probs(self, x, lengths=None):
        logits, out_lengths = self.forward(x, lengths)
        return F.log_softmax(logits, axis=-1), out_lengths

    def predict_log_probs(self, features):
        """Per-sample ``(T', V+1)`` log-probability arrays, computed without a tape."""
        with no_grad():
            lp, lengths = self.log_probs(list(features))
        return [lp.data[b, :n] for b, n in enumerate(lengths)]

    def decode(self, features, beam=None):
        out = []
        for lp in self.predict_log_probs(features):
            out.append(greedy_decode(lp) if not beam else beam_decode(lp, beam))
        return out
