"""Numeric kernel dispatch.

The hot kernels have two implementations: numba-jitted loops and a
pure-numpy fallback. Selection happens once at import via the
``DANUBE_KERNELS`` env var (``numba`` or ``numpy``, default ``numba``
with automatic fallback when numba is unavailable).
"""

from __future__ import annotations

import os

_requested = os.environ.get("DANUBE_KERNELS", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError(f"DANUBE_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

if _requested == "numba":
    try:
        from . import numba_backend as _impl
    except ImportError:
        from . import numpy_backend as _impl
else:
    from . import numpy_backend as _impl


def backend() -> str:
    """Name of the active kernel backend."""
    return _impl.NAME


rms_norm = _impl.rms_norm
softmax_rows = _impl.softmax_rows
silu = _impl.silu
rope_rotate = _impl.rope_rotate
matmul_f32 = _impl.matmul_f32
matmul_quant = _impl.matmul_quant
set_num_threads = _impl.set_num_threads

__all__ = [
    "backend",
    "rms_norm",
    "softmax_rows",
    "silu",
    "rope_rotate",
    "matmul_f32",
    "matmul_quant",
    "set_num_threads",
]
