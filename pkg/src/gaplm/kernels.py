"""Backend selection for the QIF kernels.

The compiled extension is used when it imports; ``GAPLM_PURE_PYTHON=1``
forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if not os.environ.get("GAPLM_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def qif_blocks(D, a, da, v, dv, starts, code, K):
    return _impl.qif_blocks(D, a, da, v, dv, starts, code, K)


def qif_rows(D, a, da, v, dv, starts, code, K):
    return _impl.qif_rows(D, a, da, v, dv, starts, code, K)


def get_backend(name=None):
    """Module implementing the kernels: the active one, or 'python' / 'cython'."""
    if name is None:
        return _impl
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown backend {name!r}")


def qif_scores(D, a, v, starts, code, K):
    return _impl.qif_scores(D, a, v, starts, code, K)
