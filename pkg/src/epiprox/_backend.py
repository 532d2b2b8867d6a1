"""Kernel backend selection.

The compiled extension is used when importable; ``EPIPROX_BACKEND=python``
forces the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
kernels = _kernels_py

if os.environ.get("EPIPROX_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        pass


def available_backends():
    """Return ``{name: module}`` for every importable kernel implementation."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found


def default_threads():
    env = os.environ.get("EPIPROX_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1
