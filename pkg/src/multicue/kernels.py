"""Backend selection for the factor kernels.

The compiled extension is used when it imports; ``MULTICUE_KERNEL=python``
forces the numpy implementation.  Both expose ``residuals`` and
``jacobians`` with identical semantics.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("MULTICUE_KERNEL", "").lower() == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "cython" if _impl is not _kernels_py else "python"


def _prep(states, kinds, ii, jj, z):
    return (np.ascontiguousarray(states, dtype=np.float64),
            np.ascontiguousarray(kinds, dtype=np.int32),
            np.ascontiguousarray(ii, dtype=np.int32),
            np.ascontiguousarray(jj, dtype=np.int32),
            np.ascontiguousarray(z, dtype=np.float64))


def residuals(states, kinds, ii, jj, z, impl=None):
    """``(F, 6)`` residuals of the packed factors at ``states``."""
    return (impl or _impl).residuals(*_prep(states, kinds, ii, jj, z))


def jacobians(states, kinds, ii, jj, z, eps=1e-6, impl=None):
    """Residuals and per-node Jacobian blocks ``(E, Ji, Jj)``."""
    return (impl or _impl).jacobians(*_prep(states, kinds, ii, jj, z), float(eps))


def python_impl():
    return _kernels_py


def compiled_impl():
    """The extension module, or ``None`` when it is not built."""
    try:
        from . import _kernels
    except ImportError:
        return None
    return _kernels
