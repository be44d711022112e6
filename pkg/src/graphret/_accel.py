"""Numba switch for the hot kernels.

Set ``GRAPHRET_DISABLE_NUMBA=1`` to run every kernel through its pure-numpy
fallback (useful for debugging and for platforms without numba).
"""
import os

_FLAG = os.environ.get("GRAPHRET_DISABLE_NUMBA", "").strip().lower()
DISABLED = _FLAG in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and not DISABLED

if numba is not None:
    # the system TBB is often too old for numba; prefer the other layers
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


def njit(func):
    """Compile ``func`` with numba when available, otherwise return it as is."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True)(func)


def njit_parallel(func):
    """Like :func:`njit` but allows ``prange`` loops to run on numba's thread pool."""
    if numba is None:  # pragma: no cover
        return func
    return numba.njit(cache=True, nogil=True, parallel=True)(func)


def prange(*args):
    return range(*args)


if numba is not None:
    prange = numba.prange  # noqa: F811


def set_threads(n):
    if numba is not None and n and n > 0:
        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
