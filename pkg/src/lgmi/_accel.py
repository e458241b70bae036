"""Numba switch.

Set ``LGMI_DISABLE_NUMBA=1`` before import to run every kernel as plain
numpy/Python. Missing numba falls back the same way.
"""
import os

_disabled = os.environ.get("LGMI_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError
    import numba
    from numba import njit, prange

    # the system TBB is often too old for numba; skip it rather than warn
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
    NUMBA_ENABLED = True
except ImportError:
    numba = None
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        # bare @njit or @njit(...)
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(func):
            return func

        return wrapper

    def prange(*args):
        return range(*args)


def backend():
    return "numba" if NUMBA_ENABLED else "numpy"


__all__ = ["NUMBA_ENABLED", "backend", "njit", "prange"]
