"""Numba/numpy backend selection for the hot numeric kernels.

The kernels in kernels.py are written once and compiled with numba when the
backend is enabled; the same source runs as plain python/numpy otherwise.
Set SCRAWL_NUMBA=0 to force the pure-numpy path (it is also selected
automatically when numba is not importable).  bench/bench_backends.py
compares the two paths.
"""

import os

try:
    import numba

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    numba = None
    _HAVE_NUMBA = False

_FLAG = os.environ.get("SCRAWL_NUMBA", "1").strip().lower()
USE_NUMBA = _HAVE_NUMBA and _FLAG not in ("0", "false", "off", "no")


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"


def jit(func):
    """Compile func with numba when enabled, otherwise return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(func)
    return func
