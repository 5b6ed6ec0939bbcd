"""Backend selection for the hot kernels.

Numba-compiled kernels are used when numba imports cleanly and the
environment variable ``QBX3D_BACKEND`` is not set to ``numpy``.  The
pure-numpy path computes the same quantities and is used for testing
and for platforms without numba.
"""
import os

# TBB in the base image is too old for numba; avoid the warning
os.environ.setdefault("NUMBA_THREADING_LAYER", "workqueue")

try:
    import numba
    from numba import njit, prange
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False
    prange = range

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(f):
            return f
        return wrap


_requested = os.environ.get("QBX3D_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ValueError("QBX3D_BACKEND must be 'numba' or 'numpy', got %r" % _requested)

USE_NUMBA = HAVE_NUMBA and _requested == "numba"

# cache compiled kernels on disk; parallel loops only pay off with >1 core
JIT = dict(cache=True, nogil=True)
JIT_PAR = dict(cache=True, nogil=True, parallel=True)


def use_numba():
    """Return True when the compiled kernels are active."""
    return USE_NUMBA


def set_backend(name):
    """Switch backend at runtime ('numba' or 'numpy')."""
    global USE_NUMBA
    name = name.strip().lower()
    if name == "numba":
        if not HAVE_NUMBA:
            raise RuntimeError("numba is not installed")
        USE_NUMBA = True
    elif name == "numpy":
        USE_NUMBA = False
    else:
        raise ValueError("unknown backend %r" % name)


def set_threads(n):
    """Set the numba thread count (no-op for the numpy backend)."""
    if HAVE_NUMBA and n is not None and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
