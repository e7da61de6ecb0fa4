"""Numba switch.

Set ``CHORDARC_DISABLE_NUMBA=1`` to run every kernel through its numpy
fallback. The flag is read once at import time.
"""
import os

_flag = os.environ.get("CHORDARC_DISABLE_NUMBA", "").strip().lower()
DISABLED = _flag in ("1", "true", "yes", "on")

# the bundled TBB is too old for numba; skip its probe warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

HAVE_NUMBA = False
try:
    # compilation is lazy, so importing costs nothing when disabled
    from numba import njit, prange  # noqa: F401

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    pass

USE_NUMBA = HAVE_NUMBA and not DISABLED


if not HAVE_NUMBA:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrapper(func):
            return func

        return wrapper

    prange = range


def backend():
    return "numba" if USE_NUMBA else "numpy"
