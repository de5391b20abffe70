import itertools
import math

import numpy as np
import pytest

from cslr.ctc import BLANK
from cslr.pose import NUM_LANDMARKS, KeypointSequence

SEEDS = list(range(20))


def log_softmax_np(z):
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def collapse(path):
    out, prev = [], None
    for k in path:
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return tuple(out)


def brute_force_ctc(log_probs, target):
    """-log of the summed probability of every frame path that collapses to ``target``."""
    T, V = log_probs.shape
    total = 0.0
    for path in itertools.product(range(V), repeat=T):
        if collapse(path) == tuple(target):
            total += math.exp(sum(log_probs[t, k] for t, k in enumerate(path)))
    return -math.log(total) if total > 0 else math.inf


def label_distribution(log_probs):
    """Exact P(label sequence) for every reachable label sequence."""
    T, V = log_probs.shape
    dist = {}
    for path in itertools.product(range(V), repeat=T):
        key = collapse(path)
        dist[key] = dist.get(key, 0.0) + math.exp(sum(log_probs[t, k] for t, k in enumerate(path)))
    return dist


def brute_force_edit(ref, hyp):
    """Minimal unit-cost edit script length by exhaustive recursion (memoised)."""
    from functools import lru_cache

    ref, hyp = tuple(ref), tuple(hyp)

    @lru_cache(maxsize=None)
    def go(i, j):
        if i == len(ref):
            return len(hyp) - j
        if j == len(hyp):
            return len(ref) - i
        return min(go(i + 1, j + 1) + (ref[i] != hyp[j]), go(i + 1, j) + 1, go(i, j + 1) + 1)

    return go(0, 0)


def random_keypoints(T=8, seed=0, missing=0.0, glosses=("g000",), id="x", signer="s00"):
    rng = np.random.default_rng(seed)
    coords = rng.normal(0, 50, size=(T, NUM_LANDMARKS, 2)) + 200
    valid = rng.random((T, NUM_LANDMARKS)) >= missing
    valid[0, :] |= ~valid.any(axis=0)
    return KeypointSequence(coords, valid, signer_id=signer, glosses=glosses, id=id)


@pytest.fixture
def rng():
    return np.random.default_rng(0)
