"""JIT switch.

Kernels are written once in plain Python and compiled with numba unless the
environment variable ``TSRT_DISABLE_NUMBA`` is set to a truthy value (or numba
is missing). The uncompiled path is the reference used by the benchmark.
"""

from __future__ import annotations

import os

_FLAG = os.environ.get("TSRT_DISABLE_NUMBA", "").strip().lower()
DISABLED_BY_ENV = _FLAG not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not DISABLED_BY_ENV


def njit(func):
    """Compile ``func`` in nopython mode when numba is active, else return it."""
    if USE_NUMBA:
        return numba.njit(cache=True, fastmath=False)(func)
    return func
