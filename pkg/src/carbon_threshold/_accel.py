"""Optional numba acceleration.

Set ``CARBON_THRESHOLD_PURE_NUMPY=1`` to force the pure-numpy code paths even
when numba is importable.  Both paths are always defined when numba is
installed so the benchmark can compare them side by side.
"""
import os

try:
    import numba
    HAVE_NUMBA = True
    prange = numba.prange
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # portable default; avoids noisy probing of an old TBB at first parallel call
        numba.config.THREADING_LAYER = "workqueue"
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False
    prange = range

_FLAG = os.environ.get("CARBON_THRESHOLD_PURE_NUMPY", "").strip().lower()
USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")


def njit(*args, **kwargs):
    """``numba.njit`` when numba is installed, otherwise the identity decorator."""
    if HAVE_NUMBA:
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def set_threads(n: int) -> None:
    if HAVE_NUMBA and n and n > 0:
        numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
