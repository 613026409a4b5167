"""Backend switch for the numeric kernels.

Kernels are written once in a numba-compatible subset of Python. When numba is
importable and not disabled, they are compiled with ``@njit``; otherwise the
plain Python functions run, and the Monte Carlo stepping falls back to a
vectorised numpy implementation.

Set ``MCSBP_BACKEND=numpy`` (or ``NUMBA_DISABLE_JIT=1``) to force the fallback.
"""
import os

try:
    import numba as _numba
except ImportError:  # pragma: no cover
    _numba = None


def _wants_numba():
    if _numba is None:
        return False
    if os.environ.get("MCSBP_BACKEND", "").strip().lower() == "numpy":
        return False
    if os.environ.get("NUMBA_DISABLE_JIT", "0") not in ("", "0"):
        return False
    return True


USE_NUMBA = _wants_numba()
BACKEND = "numba" if USE_NUMBA else "numpy"


def njit(func=None, **options):
    """``numba.njit(cache=True, nogil=True)`` or the identity, per backend."""
    options.setdefault("cache", True)
    options.setdefault("nogil", True)

    def wrap(f):
        if USE_NUMBA:
            return _numba.njit(**options)(f)
        return f

    if func is None:
        return wrap
    return wrap(func)
