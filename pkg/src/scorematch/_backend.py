"""Select between numba-compiled kernels and the plain numpy fallback.

Set ``SCOREMATCH_NO_NUMBA=1`` to run every kernel as ordinary Python/numpy
code (useful for debugging and for benchmarking the two paths).
"""
import os

_FLAG = os.environ.get("SCOREMATCH_NO_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in {"1", "true", "yes", "on"}


def jit(func):
    """Compile ``func`` with ``numba.njit`` when enabled, else return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
