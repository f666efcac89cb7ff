"""Numba switch.

The compiled kernels are always built when numba is importable, so the
benchmark can compare both paths in one process. ``ROTBAYES_DISABLE_NUMBA=1``
only changes which implementation the public kernel names dispatch to.
"""
import os

_FLAG = os.environ.get("ROTBAYES_DISABLE_NUMBA", "0").strip().lower()
DISABLE_NUMBA = _FLAG in ("1", "true", "yes", "on")

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and not DISABLE_NUMBA


def njit(func=None, **kwargs):
    """``numba.njit(cache=True)`` or a no-op when numba is absent."""
    kwargs.setdefault("cache", True)

    def wrap(f):
        if not HAVE_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if func is None:
        return wrap
    return wrap(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
