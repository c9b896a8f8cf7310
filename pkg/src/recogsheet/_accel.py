"""Optional numba acceleration.

Set ``RECOGSHEET_DISABLE_NUMBA=1`` to force the pure-numpy kernels even when
numba is importable. The flag is read once, at import time.
"""

import os

_FLAG = "RECOGSHEET_DISABLE_NUMBA"

_disabled = os.environ.get(_FLAG, "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _disabled:
        raise ImportError
    from numba import njit as _numba_njit
except ImportError:
    _numba_njit = None

NUMBA_ENABLED = _numba_njit is not None


def njit(*args, **kwargs):
    """``numba.njit`` when available and enabled, otherwise the identity."""
    if _numba_njit is not None:
        return _numba_njit(*args, **kwargs)

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrapper(f):
        return f

    return wrapper
