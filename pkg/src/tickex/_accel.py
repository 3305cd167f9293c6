"""Numba acceleration switch.

Hot kernels ship in two variants: a numba ``@njit`` build and a pure-numpy
fallback. Selection is controlled by the ``TICKEX_USE_NUMBA`` environment
variable ("0" forces the numpy path); when numba is not importable the
fallback is used regardless. Both paths implement identical arithmetic.
"""

import os

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        raise RuntimeError("numba is not available")


def use_numba() -> bool:
    """True when the numba kernel path is active."""
    return HAS_NUMBA and os.environ.get("TICKEX_USE_NUMBA", "1") != "0"
