"""Kernel backend selection.

The compiled extension is used when importable; ``EMTSIM_PURE_PYTHON=1``
forces the pure-Python implementation.
"""
from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("EMTSIM_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]
    except ImportError:
        _impl = _kernels_py

BACKEND: str = _impl.BACKEND
sg_kernel = _impl.sg_kernel
vsc_kernel = _impl.vsc_kernel


def backend_module(name: str):
    """Return the kernel module for ``"python"`` or ``"cython"``."""
    if name == "python":
        return _kernels_py
    if name == "cython":
        from . import _kernels  # type: ignore[attr-defined]
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")
