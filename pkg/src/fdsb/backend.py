"""Kernel backend selection.

Two interchangeable kernel modules exist: `_nbkernels` (numba-compiled
loops) and `_npkernels` (pure numpy).  The active one is chosen once at
import time from the environment variable ``FDSB_BACKEND``:

* ``numba``  - require the compiled kernels, raise if numba is unusable
* ``numpy``  - force the pure-numpy fallback
* ``auto``   - numba when importable, numpy otherwise (default)

Use :func:`get_kernels` everywhere instead of importing a kernel module
directly, so a single env flag flips the whole package.
"""

import os

_VALID = ("auto", "numba", "numpy")
_kernels = None
_name = None


def _resolve():
    choice = os.environ.get("FDSB_BACKEND", "auto").strip().lower()
    if choice not in _VALID:
        raise ValueError(
            f"FDSB_BACKEND must be one of {_VALID}, got {choice!r}")
    if choice == "numpy":
        from . import _npkernels
        return _npkernels, "numpy"
    try:
        from . import _nbkernels
        return _nbkernels, "numba"
    except ImportError:
        if choice == "numba":
            raise
        from . import _npkernels
        return _npkernels, "numpy"


def get_kernels():
    """Return the active kernel module (resolved once, then cached)."""
    global _kernels, _name
    if _kernels is None:
        _kernels, _name = _resolve()
    return _kernels


def backend_name():
    """Name of the active backend, resolving it if needed."""
    get_kernels()
    return _name
