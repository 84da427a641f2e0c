"""Optional numba acceleration for the boundary-check kernels.

The decision kernels are written once in numba-compatible numpy style and
compiled with @njit when numba is importable. Set AITH_DISABLE_NUMBA=1 to
force the pure-Python interpretation of the same functions (useful for
debugging, coverage, and the kernel comparison benchmark).
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("AITH_DISABLE_NUMBA", "").strip() not in ("", "0", "false")

if not _DISABLED:
    try:
        from numba import njit

        USING_NUMBA = True
    except ImportError:
        USING_NUMBA = False
else:
    USING_NUMBA = False

if not USING_NUMBA:

    def njit(*args, **kwargs):
        if args and callable(args[0]) and len(args) == 1 and not kwargs:
            return args[0]
        return lambda f: f


__all__ = ["njit", "USING_NUMBA"]
