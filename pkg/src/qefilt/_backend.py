"""Selects the simulation kernel backend at import time.

The compiled extension (qefilt._kernels) is preferred; the pure-NumPy
fallback (qefilt._kernels_py) is used when the extension is missing or
when QEFILT_FORCE_PYTHON is set. Both expose the same functions with the
same randomness layout, so the choice only affects speed.
"""
from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _kernels  # compiled extension, optional
except ImportError:
    _kernels = None

if _kernels is not None and not os.environ.get("QEFILT_FORCE_PYTHON"):
    _active = _kernels
else:
    _active = _kernels_py

BACKEND_NAME = _active.BACKEND
HAVE_COMPILED = _kernels is not None


def get_backend(name: str | None = None):
    """Return a kernel module: the active one, or 'python' / 'compiled' by name."""
    if name is None:
        return _active
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _kernels is None:
            raise RuntimeError("compiled backend is not available")
        return _kernels
    raise ValueError(f"unknown backend {name!r}")
