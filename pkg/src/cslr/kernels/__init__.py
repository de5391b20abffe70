"""Hot dynamic-programming kernels.

The numba implementations are used by default. Set ``CSLR_DISABLE_NUMBA=1``
(or run without numba installed) to select the pure-numpy path. Both paths
share one contract and are cross-checked in the test suite.
"""

import os

from . import _numpy

NEG = _numpy.NEG

_disabled = os.environ.get("CSLR_DISABLE_NUMBA", "").lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    from . import _numba
except ImportError:
    _numba = None

BACKENDS = {"numpy": _numpy}
if _numba is not None:
    BACKENDS["numba"] = _numba

BACKEND = "numba" if _numba is not None else "numpy"


def get_backend(name=None):
    return BACKENDS[name or BACKEND]


def ctc_forward_backward(log_probs, target, blank=0):
    return BACKENDS[BACKEND].ctc_forward_backward(log_probs, target, blank)


def edit_alignment(ref, hyp):
    return BACKENDS[BACKEND].edit_alignment(ref, hyp)
