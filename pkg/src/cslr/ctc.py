"""CTC loss and decoders. Output index 0 is the blank symbol."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import InfeasibleAlignmentError, VocabularyError
from .tensor import Tensor, as_array

BLANK = 0


@dataclass(frozen=True)
class GlossVocabulary:
    tokens: tuple
    blank_index: int = field(default=BLANK, init=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if not tokens:
            raise VocabularyError("vocabulary needs at least one gloss")
        if len(set(tokens)) != len(tokens):
            raise VocabularyError("vocabulary tokens must be unique")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "_index", {tok: i + 1 for i, tok in enumerate(tokens)})

    def __len__(self):
        return len(self.tokens)

    @property
    def output_size(self):
        return len(self.tokens) + 1

    def encode(self, glosses):
        try:
            return tuple(self._index[g] for g in glosses)
        except KeyError as exc:
            raise VocabularyError(f"unknown gloss token {exc.args[0]!r}") from None

    def decode(self, ids):
        return [self.tokens[i - 1] for i in ids]


def validate_target(target, num_classes=None):
    ids = tuple(int(i) for i in target)
    for i in ids:
        if i == BLANK or i < 0 or (num_classes is not None and i >= num_classes):
            raise VocabularyError(f"label {i} is not a gloss id")
    return ids


def required_length(target):
    """Minimum frame count able to emit ``target``: one frame per label plus a blank between repeats."""
    target = list(target)
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def ctc_loss(log_probs, target):
    """Negative log-likelihood of ``target`` and its gradient w.r.t. ``log_probs``.

    ``log_probs`` is a ``(T, V)`` matrix of per-frame log-softmax outputs.
    """
    lp = as_array(log_probs)
    ids = validate_target(target, lp.shape[1])
    if lp.shape[0] < required_length(ids):
        raise InfeasibleAlignmentError(
            f"{lp.shape[0]} frames cannot emit a target needing {required_length(ids)}")
    loss, grad = kernels.ctc_forward_backward(lp, np.asarray(ids, dtype=np.int64), BLANK)
    return float(loss), grad


def ctc_loss_batch(log_probs, targets, lengths):
    """Mean over the batch of per-sample CTC losses (no length normalisation).

    ``log_probs`` is a ``(B, T, V)`` tensor; frames past ``lengths[b]`` are ignored.
    """
    lp = log_probs.data
    B = lp.shape[0]
    grad = np.zeros_like(lp)
    total = 0.0
    for b in range(B):
        n = int(lengths[b])
        loss, g = ctc_loss(lp[b, :n], targets[b])
        total += loss
        grad[b, :n] = g
    grad /= B

    def backward(g):
        return (g * grad,)

    return Tensor.from_op(np.array(total / B), (log_probs,), backward, "ctc_loss")


def greedy_decode(log_probs):
    """Best path: per-frame argmax, merge repeats, drop blanks."""
    best = np.argmax(as_array(log_probs), axis=1)
    out, prev = [], None
    for k in best:
        k = int(k)
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return out


def _logadd(a, b):
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log(math.exp(a - m) + math.exp(b - m))


def beam_search(log_probs, beam_width=8):
    """CTC prefix beam search without a language model.

    Returns ``[(prefix, log_prob), ...]`` best first. ``beam_width=None``
    keeps every prefix, which makes the result exact.
    """
    lp = as_array(log_probs)
    if beam_width is not None and beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    T, V = lp.shape
    ninf = -math.inf
    beams = {(): (0.0, ninf)}
    for t in range(T):
        row = lp[t]
        nxt = {}
        for prefix, (pb, pnb) in beams.items():
            total = _logadd(pb, pnb)
            b, nb = nxt.get(prefix, (ninf, ninf))
            b = _logadd(b, total + row[BLANK])
            last = prefix[-1] if prefix else None
            if last is not None:
                nb = _logadd(nb, pnb + row[last])
            nxt[prefix] = (b, nb)
            for c in range(1, V):
                ext = prefix + (c,)
                eb, enb = nxt.get(ext, (ninf, ninf))
                src = pb if c == last else total
                nxt[ext] = (eb, _logadd(enb, src + row[c]))
        ranked = sorted(nxt.items(), key=lambda kv: (-_logadd(*kv[1]), kv[0]))
        if beam_width is not None:
            ranked = ranked[:beam_width]
        beams = dict(ranked)
    ranked = sorted(((p, _logadd(*s)) for p, s in beams.items()), key=lambda kv: (-kv[1], kv[0]))
    # zero-probability prefixes (e.g. too many repeats for T) are not hypotheses
    return [(list(p), s) for p, s in ranked if s > -math.inf]


def beam_decode(log_probs, beam_width=8):
    return beam_search(log_probs, beam_width)[0][0]


def sequence_log_prob(log_probs, target):
    """log P(target | log_probs) summed over all alignments; -inf if infeasible."""
    lp = as_array(log_probs)
    ids = validate_target(target, lp.shape[1])
    if lp.shape[0] < required_length(ids):
        return -math.inf
    loss, _ = kernels.ctc_forward_backward(lp, np.asarray(ids, dtype=np.int64), BLANK)
    return -float(loss)
