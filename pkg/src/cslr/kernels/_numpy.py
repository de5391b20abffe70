"""Pure-numpy kernels, vectorised along the non-sequential axis."""

import numpy as np

NEG = -1e30


def ctc_forward_backward(log_probs, target, blank=0):
    """Log-space CTC alpha/beta recursion.

    Returns ``(loss, grad)`` where ``grad`` is d(loss)/d(log_probs). An
    infeasible alignment yields ``loss = inf`` and a zero gradient.
    """
    log_probs = np.asarray(log_probs, dtype=np.float64)
    target = np.asarray(target, dtype=np.int64)
    T, V = log_probs.shape
    L = target.shape[0]
    S = 2 * L + 1
    ext = np.full(S, blank, dtype=np.int64)
    ext[1::2] = target
    skip = np.zeros(S, dtype=bool)
    if S > 2:
        skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])
    emit = log_probs[:, ext]

    alpha = np.full((T, S), NEG)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = np.maximum(a + emit[t], NEG)

    beta = np.full((T, S), NEG)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = np.maximum(b + emit[t], NEG)

    log_z = alpha[T - 1, S - 1] if S == 1 else np.logaddexp(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    grad = np.zeros((T, V))
    if log_z <= NEG / 2:
        return np.inf, grad
    occupancy = np.exp(alpha + beta - emit - log_z)
    for s in range(S):
        grad[:, ext[s]] -= occupancy[:, s]
    return -log_z, grad


def edit_alignment(ref, hyp):
    """Unit-cost Levenshtein alignment of two integer sequences.

    Returns ``(substitutions, insertions, deletions)``. Backtrace prefers the
    diagonal move, then deletion, then insertion.
    """
    ref = np.asarray(ref, dtype=np.int64)
    hyp = np.asarray(hyp, dtype=np.int64)
    n, m = ref.shape[0], hyp.shape[0]
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    d[0] = np.arange(m + 1)
    cols = np.arange(m + 1)
    for i in range(1, n + 1):
        cost = (ref[i - 1] != hyp).astype(np.int64)
        row = np.empty(m + 1, dtype=np.int64)
        row[0] = i
        row[1:] = np.minimum(d[i - 1, 1:] + 1, d[i - 1, :-1] + cost)
        # horizontal (insertion) moves: row[j] = min_{j' <= j} row[j'] + (j - j')
        d[i] = np.minimum.accumulate(row - cols) + cols
    i, j = n, m
    s = ins = dele = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            s += int(ref[i - 1] != hyp[j - 1])
            i -= 1
            j -= 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return s, ins, dele
