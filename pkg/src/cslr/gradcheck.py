"""Central finite-difference checks for tape gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def relative_error(a, b):
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-8)
    return float(np.linalg.norm(a - b) / scale)


def numeric_gradient(f, tensor, h=1e-5, entries=None):
    """Central differences of scalar ``f()`` w.r.t. ``tensor.data``.

    With ``entries`` (flat indices) only those coordinates are probed and a
    1-D array of their derivatives is returned.
    """
    flat = tensor.data.reshape(-1)
    idx = np.arange(flat.size) if entries is None else np.asarray(entries)
    out = np.zeros(idx.size)
    for n, i in enumerate(idx):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(np.sum(f().data))
        flat[i] = orig - h
        fm = float(np.sum(f().data))
        flat[i] = orig
        out[n] = (fp - fm) / (2 * h)
    return out.reshape(tensor.data.shape) if entries is None else out


def check_gradients(f, tensors, h=1e-5, projection=None, max_entries=None, seed=1234):
    """Relative error between tape and finite-difference gradients.

    ``f`` rebuilds the graph from ``tensors`` and returns a tensor, reduced
    to a scalar as ``sum(out * projection)`` (a fixed random projection by
    default, so every output entry contributes). ``max_entries`` caps how
    many coordinates of each tensor are probed. Returns ``{name or index: error}``.
    """
    rng = np.random.default_rng(seed)
    probe = f()
    if projection is None:
        projection = rng.normal(size=probe.shape)

    def scalar():
        return (f() * projection).sum()

    for t in tensors:
        t.grad = None
    scalar().backward()
    errors = {}
    for i, t in enumerate(tensors):
        analytic = t.grad.reshape(-1)
        entries = None
        if max_entries is not None and t.data.size > max_entries:
            entries = np.sort(rng.choice(t.data.size, size=max_entries, replace=False))
        numeric = numeric_gradient(scalar, t, h, entries)
        a = analytic if entries is None else analytic[entries]
        errors[t.name or i] = relative_error(a, numeric)
    return errors


def check_model_gradients(model, forward, h=1e-5, max_entries=6, seed=1234):
    """``check_gradients`` over every named parameter of ``model``."""
    names, params = zip(*model.named_parameters())
    errs = check_gradients(forward, list(params), h=h, max_entries=max_entries, seed=seed)
    return dict(zip(names, errs.values()))


def leaf(data, name=None):
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)
