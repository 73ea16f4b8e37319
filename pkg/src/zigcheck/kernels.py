"""Numerical kernel backend selection.

The compiled Cython extension is used when it imports; otherwise the
numpy/scipy fallback is used. Set ``ZIGCHECK_BACKEND=python`` to force the
fallback (handy for parity tests and benchmarks).
"""
from __future__ import annotations

import os

from . import _fallback

_forced = os.environ.get("ZIGCHECK_BACKEND", "").lower()

if _forced == "python":
    _impl = _fallback
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        if _forced == "cython":
            raise
        _impl = _fallback

BACKEND: str = _impl.BACKEND
uniformized_series = _impl.uniformized_series
power_iterate = _impl.power_iterate
gauss_seidel = _impl.gauss_seidel
sim_state_at = _impl.sim_state_at
sim_sojourn = _impl.sim_sojourn
sim_long_run = _impl.sim_long_run


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"`` explicitly."""
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
