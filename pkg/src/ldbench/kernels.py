"""Backend selection for the hot kernels.

The compiled Cython extension is preferred when importable; the numpy
fallback is used otherwise. ``LDBENCH_BACKEND=python|compiled|auto``
overrides the choice, ``LDBENCH_THREADS`` sets the default worker count
for the grid kernels.
"""

from __future__ import annotations

import os

from . import _kernels_py

_requested = os.environ.get("LDBENCH_BACKEND", "auto").lower()

if _requested == "python":
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _kernels_py

BACKEND = _impl.BACKEND_NAME

reference_stride = _impl.reference_stride
sympnet_stride = _impl.sympnet_stride
henon_stride = _impl.henon_stride
ghnn_stride = _impl.ghnn_stride
sympnet_grads = _impl.sympnet_grads
henon_grads = _impl.henon_grads
ghnn_grads = _impl.ghnn_grads
reservoir_update = _impl.reservoir_update
reservoir_readout = _impl.reservoir_readout
reservoir_collect = _impl.reservoir_collect


def default_threads() -> int:
    env = os.environ.get("LDBENCH_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1
