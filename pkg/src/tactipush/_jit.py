"""Optional numba acceleration.

Kernels are written once in plain Python/numpy and compiled with ``njit`` when
numba is importable. Setting ``TACTIPUSH_NO_NUMBA=1`` (any non-empty value other
than ``0``) forces the interpreted path, which is what the fallback benchmark and
the parity tests exercise.
"""
import os

try:
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False


def numba_disabled():
    flag = os.environ.get("TACTIPUSH_NO_NUMBA", "")
    return flag not in ("", "0")


USE_NUMBA = HAVE_NUMBA and not numba_disabled()


def optional_njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity otherwise.

    The undecorated function is always reachable as ``.py_func`` so callers
    can pick a path explicitly.
    """

    def decorator(func):
        if USE_NUMBA:
            compiled = _njit(*args, **kwargs)(func)
            return compiled
        func.py_func = func
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        func, args = args[0], ()
        return decorator(func)
    return decorator
