"""JIT switch.

Set ``PREINT_DISABLE_JIT=1`` to run every kernel through its pure-numpy
path. ``PREINT_THREADS`` caps the numba and FFT worker count.
"""
import os
import warnings

_FALSY = {"", "0", "false", "no", "off"}


def _env_flag(name):
    return os.environ.get(name, "").strip().lower() not in _FALSY


USE_NUMBA = not _env_flag("PREINT_DISABLE_JIT")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    if USE_NUMBA:
        warnings.warn("numba could not be imported; falling back to numpy kernels")
    USE_NUMBA = False


def worker_count():
    """Number of workers allowed by ``PREINT_THREADS`` (default: all cores)."""
    cores = os.cpu_count() or 1
    raw = os.environ.get("PREINT_THREADS")
    if not raw:
        return cores
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"PREINT_THREADS must be an integer, got {raw!r}") from None
    return max(1, min(n, cores))


if USE_NUMBA:
    # the system TBB is too old for numba; try OpenMP first to skip the warning
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]
    njit = numba.njit
    prange = numba.prange
    numba.set_num_threads(min(worker_count(), numba.config.NUMBA_NUM_THREADS))
else:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func

    prange = range
