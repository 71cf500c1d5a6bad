"""Optional numba acceleration for the per-tick kernels.

Every kernel is plain Python that numba can compile. Setting
``TANKGUARD_NO_JIT=1`` (or running without numba installed) executes the same
code uncompiled, which is slow but produces identical arithmetic.
"""
import os

try:
    if os.environ.get("TANKGUARD_NO_JIT"):
        raise ImportError
    from numba import njit as _njit

    def njit(fn):
        return _njit(cache=True, nogil=True)(fn)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba

    def njit(fn):
        return fn

    HAVE_NUMBA = False
