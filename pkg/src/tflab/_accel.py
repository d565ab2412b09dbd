"""Numba switch.

Set ``TFLAB_JIT=0`` to run every kernel through its pure-numpy path. When
numba is not importable the numpy path is used as well.
"""
import os

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

JIT_ENABLED = numba is not None and os.environ.get("TFLAB_JIT", "1") not in ("0", "false", "no")


def njit(fn):
    """``numba.njit(cache=True)`` when available, identity otherwise."""
    if numba is None:
        return fn
    return numba.njit(cache=True)(fn)


def oracle_cap(default=24):
    """Largest state-space size (in bits) exhaustive checks accept."""
    return int(os.environ.get("TFLAB_ORACLE_CAP", default))
