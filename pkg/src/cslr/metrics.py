"""Word error rate over gloss sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import UndefinedWERError


@dataclass(frozen=True)
class EditOps:
    S: int = 0
    I: int = 0
    D: int = 0
    N: int = 0

    @property
    def errors(self):
        return self.S + self.I + self.D

    @property
    def rate(self):
        if self.N < 1:
            raise UndefinedWERError("WER is undefined for an empty reference")
        return self.errors / self.N

    def __add__(self, other):
        return EditOps(self.S + other.S, self.I + other.I, self.D + other.D, self.N + other.N)


def _encode_pair(ref, hyp):
    table = {}
    r = np.array([table.setdefault(tok, len(table)) for tok in ref], dtype=np.int64)
    h = np.array([table.setdefault(tok, len(table)) for tok in hyp], dtype=np.int64)
    return r, h


def edit_ops(ref, hyp):
    """Minimal unit-cost alignment counts; substitutions win ties against insert+delete."""
    r, h = _encode_pair(list(ref), list(hyp))
    s, i, d = kernels.edit_alignment(r, h)
    return EditOps(int(s), int(i), int(d), len(r))


def wer(ref, hyp):
    """``(rate, ops)`` with rate = (S + I + D) / N. Tokens may be any hashable."""
    ops = edit_ops(ref, hyp)
    return ops.rate, ops


def corpus_wer(pairs):
    """Pooled WER: total edits over total reference length."""
    total = EditOps()
    for ref, hyp in pairs:
        total = total + edit_ops(ref, hyp)
    return total.rate, total
