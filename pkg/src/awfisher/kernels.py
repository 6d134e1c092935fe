"""Backend selection for the numeric hot paths.

The compiled extension ``awfisher._kernels`` is used when importable;
otherwise the numpy implementation in ``awfisher._fallback`` is used.
Set ``AWFISHER_PURE_PYTHON=1`` to force the fallback.
"""
import math
import os
from functools import lru_cache

import numpy as np

from . import _fallback

try:
    if os.environ.get("AWFISHER_PURE_PYTHON", "") == "1":
        raise ImportError("pure-python backend forced")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"

# Relative slack under which two candidate log-levels count as tied.
TIE_RTOL = 1e-12


@lru_cache(maxsize=None)
def _logfact_table(n):
    table = np.array([math.lgamma(i + 1.0) for i in range(n)], dtype=np.float64)
    table.flags.writeable = False
    return table


def log_factorials(n):
    """Return ``log(i!)`` for ``i = 0 .. n-1`` (read-only, cached)."""
    return _logfact_table(max(int(n), 1))


def available_backends():
    return ("cython", "python") if _compiled is not None else ("python",)


def _impl(backend):
    backend = backend or BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    if backend == "python":
        return _fallback
    raise ValueError(f"unknown backend {backend!r}")


def chi2_even_log_sf_many(t, half_df, backend=None):
    """Vectorised ``log P(chi2_{2h} > t)`` with broadcasting over ``t`` and ``h``."""
    t = np.asarray(t, dtype=np.float64)
    h = np.asarray(half_df, dtype=np.int64)
    t, h = np.broadcast_arrays(t, h)
    if t.size == 0:
        return np.zeros(t.shape)
    logfact = log_factorials(int(h.max()) + 1)
    impl = _impl(backend)
    if impl is _fallback:
        return _fallback.chi2_even_log_sf(t, h, logfact)
    flat = impl.chi2_even_log_sf(
        np.ascontiguousarray(t.ravel()),
        np.ascontiguousarray(h.ravel(), dtype=np.int_),
        logfact,
    )
    return flat.reshape(t.shape)


def aw_sorted_batch(logp, backend=None):
    """Sorted-prefix AW search over the rows of a ``(n, K)`` log p-value matrix.

    Returns ``(log_level, weights, count)`` where ``weights`` is a uint8
    ``(n, K)`` array and ``count`` the number of selected studies per row.
    """
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    if logp.ndim != 2 or logp.shape[1] < 1:
        raise ValueError("logp must be a 2-d array with at least one column")
    logfact = log_factorials(logp.shape[1] + 1)
    return _impl(backend).aw_sorted_batch(logp, logfact, TIE_RTOL)
