"""Optional numba acceleration.

Set ``NCBSTS_DISABLE_NUMBA=1`` in the environment (before import) to force the
pure-numpy kernels even when numba is installed.
"""
import os


def _noop_jit(*args, **kwargs):
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def wrap(f):
        return f

    return wrap


def _have_numba():
    try:
        import numba  # noqa: F401

        return True
    except ImportError:
        return False


HAVE_NUMBA = _have_numba()
DISABLED = os.environ.get("NCBSTS_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")
USE_NUMBA = HAVE_NUMBA and not DISABLED

if HAVE_NUMBA:
    from numba import njit
else:
    njit = _noop_jit


def backend():
    """Name of the kernel backend selected at import time."""
    return "numba" if USE_NUMBA else "numpy"
