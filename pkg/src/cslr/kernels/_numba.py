"""Numba-compiled kernels; same contracts as the numpy module."""

import numpy as np
from numba import njit

NEG = -1e30


@njit(cache=True)
def _lse(a, b):
    m = a if a > b else b
    if m <= NEG:
        return NEG
    return m + np.log(np.exp(a - m) + np.exp(b - m))


@njit(cache=True)
def _ctc_forward_backward(log_probs, target, blank):
    T, V = log_probs.shape
    L = target.shape[0]
    S = 2 * L + 1
    ext = np.full(S, blank, dtype=np.int64)
    for l in range(L):
        ext[2 * l + 1] = target[l]

    alpha = np.full((T, S), NEG)
    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            a = alpha[t - 1, s]
            if s >= 1:
                a = _lse(a, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                a = _lse(a, alpha[t - 1, s - 2])
            v = a + log_probs[t, ext[s]]
            alpha[t, s] = v if v > NEG else NEG

    beta = np.full((T, S), NEG)
    beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            b = beta[t + 1, s]
            if s + 1 < S:
                b = _lse(b, beta[t + 1, s + 1])
            if s + 2 < S and ext[s + 2] != blank and ext[s + 2] != ext[s]:
                b = _lse(b, beta[t + 1, s + 2])
            v = b + log_probs[t, ext[s]]
            beta[t, s] = v if v > NEG else NEG

    if S == 1:
        log_z = alpha[T - 1, 0]
    else:
        log_z = _lse(alpha[T - 1, S - 1], alpha[T - 1, S - 2])
    grad = np.zeros((T, V))
    if log_z <= NEG / 2:
        return np.inf, grad
    for t in range(T):
        for s in range(S):
            k = ext[s]
            grad[t, k] -= np.exp(alpha[t, s] + beta[t, s] - log_probs[t, k] - log_z)
    return -log_z, grad


def ctc_forward_backward(log_probs, target, blank=0):
    return _ctc_forward_backward(np.ascontiguousarray(log_probs, dtype=np.float64),
                                 np.ascontiguousarray(target, dtype=np.int64), blank)


@njit(cache=True)
def _edit_alignment(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    d = np.zeros((n + 1, m + 1), dtype=np.int64)
    for j in range(m + 1):
        d[0, j] = j
    for i in range(1, n + 1):
        d[i, 0] = i
        for j in range(1, m + 1):
            c = d[i - 1, j - 1] + (1 if ref[i - 1] != hyp[j - 1] else 0)
            if d[i - 1, j] + 1 < c:
                c = d[i - 1, j] + 1
            if d[i, j - 1] + 1 < c:
                c = d[i, j - 1] + 1
            d[i, j] = c
    i, j = n, m
    s = 0
    ins = 0
    dele = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0:
            diff = 1 if ref[i - 1] != hyp[j - 1] else 0
            if d[i, j] == d[i - 1, j - 1] + diff:
                s += diff
                i -= 1
                j -= 1
                continue
        if i > 0 and d[i, j] == d[i - 1, j] + 1:
            dele += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return s, ins, dele


def edit_alignment(ref, hyp):
    return _edit_alignment(np.ascontiguousarray(ref, dtype=np.int64),
                           np.ascontiguousarray(hyp, dtype=np.int64))
