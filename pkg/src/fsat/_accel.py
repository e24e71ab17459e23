"""Backend switch for the hot kernels.

Set ``FSAT_DISABLE_NUMBA=1`` before import to force the pure-numpy paths.
"""
import os
import warnings

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

USE_NUMBA = numba is not None and os.environ.get("FSAT_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def njit(*args, **kwargs):
    """``numba.njit`` when the numba backend is active, identity otherwise."""
    kwargs.setdefault("cache", True)

    def wrap(func):
        if numba is None:
            return func
        return numba.njit(**kwargs)(func)

    if args and callable(args[0]):
        return wrap(args[0])
    return wrap


def set_threads(n):
    """Cap worker threads for both numba and the BLAS pool."""
    from threadpoolctl import threadpool_limits

    if numba is not None:
        with warnings.catch_warnings():
            # first use initializes the threading layer, which may complain about an old TBB
            warnings.simplefilter("ignore", numba.NumbaWarning)
            numba.set_num_threads(max(1, min(n, numba.config.NUMBA_NUM_THREADS)))
    return threadpool_limits(limits=n)
