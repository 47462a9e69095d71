"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set KAMKIT_PURE=1 in the environment to force the fallback.
"""
import os

import numpy as np

from . import _fallback

COMPILED = False
_impl = _fallback
if not os.environ.get("KAMKIT_PURE"):
    try:
        from . import _kernels as _impl  # noqa: F811
        COMPILED = True
    except ImportError:
        _impl = _fallback


def block_opnorms(mat, bounds):
    """L x L array of blockwise l2 operator norms."""
    mat = np.asarray(mat)
    bounds = np.asarray(bounds, dtype=np.int64)
    if np.iscomplexobj(mat) or not COMPILED:
        return _fallback.block_opnorms(mat, bounds)
    return _impl.block_opnorms(np.ascontiguousarray(mat, dtype=np.float64), bounds)


def coupling_sum(psi, w, tuples):
    return _impl.coupling_sum(np.ascontiguousarray(psi, dtype=np.float64),
                              np.ascontiguousarray(w, dtype=np.float64),
                              np.ascontiguousarray(tuples, dtype=np.int64))


def backend():
    return "compiled" if COMPILED else "numpy"
