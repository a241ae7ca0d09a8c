"""Numba switch.

Kernels are written once as plain loops. When numba is importable and
``SHIFTSPACE_NUMBA`` is not ``0`` they are compiled with ``njit``; otherwise
the decorator is the identity and callers get the pure-Python/numpy path.
"""
from __future__ import annotations

import os

NUMBA_REQUESTED = os.environ.get("SHIFTSPACE_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")

try:  # pragma: no cover - depends on environment
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None

USE_NUMBA = NUMBA_REQUESTED and _numba is not None


def njit(*args, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return _numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def py_func(fn):
    """Return the uncompiled Python function behind a kernel."""
    return getattr(fn, "py_func", fn)


def configure_threads() -> int:
    """Apply the ``SHIFTS_THREADS`` cap to numba's thread pool; returns the count in effect."""
    raw = os.environ.get("SHIFTS_THREADS")
    if not USE_NUMBA:
        return 1
    n = _numba.config.NUMBA_NUM_THREADS
    if raw:
        try:
            n = max(1, min(int(raw), n))
        except ValueError:
            raise ValueError(f"SHIFTS_THREADS must be an integer, got {raw!r}") from None
        _numba.set_num_threads(n)
    return n


def backend() -> str:
    return "numba" if USE_NUMBA else "python"
