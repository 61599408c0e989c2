"""Optional numba acceleration.

Set ``SPDCSOURCE_DISABLE_NUMBA=1`` to force the pure-numpy code paths, e.g. for
debugging or on platforms without numba. The flag is read once at import.
"""

import os

_DISABLED = os.environ.get("SPDCSOURCE_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise the undecorated function."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn
