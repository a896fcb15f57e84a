"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``PROXY_ALIGN_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _purepy

BACKEND = "python"

if os.environ.get("PROXY_ALIGN_PURE_PYTHON") != "1":
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _purepy
    else:
        BACKEND = "cython"
else:
    _impl = _purepy

smo_svr = _impl.smo_svr
demean_sweeps = _impl.demean_sweeps

__all__ = ["BACKEND", "smo_svr", "demean_sweeps"]
