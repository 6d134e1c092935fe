"""Pure numpy implementations of the kernels in ``_kernels.pyx``."""
import numpy as np


def chi2_even_log_sf(t, half_df, logfact):
    t = np.asarray(t, dtype=np.float64)
    h = np.asarray(half_df, dtype=np.int64)
    t, h = np.broadcast_arrays(t, h)
    out = np.zeros(t.shape, dtype=np.float64)
    pos = t > 0
    if not pos.any():
        return out
    x = 0.5 * t[pos]
    hp = h[pos]
    lx = np.log(x)
    i = np.arange(int(hp.max()))
    a = i * lx[:, None] - logfact[i]
    imax = np.minimum(np.floor(x), hp - 1).astype(np.int64)
    amax = imax * lx - logfact[imax]
    terms = np.exp(a - amax[:, None])
    terms[i >= hp[:, None]] = 0.0
    out[pos] = -x + amax + np.log(terms.sum(axis=1))
    return out


def aw_sorted_batch(logp, logfact, tie_rtol):
    logp = np.asarray(logp, dtype=np.float64)
    n, K = logp.shape
    # log p ascending, ties -> larger index first
    order = K - 1 - np.argsort(logp[:, ::-1], axis=1, kind="stable")
    cum = np.cumsum(np.take_along_axis(logp, order, axis=1), axis=1)
    half_df = np.broadcast_to(np.arange(1, K + 1), (n, K))
    levels = chi2_even_log_sf(-2.0 * cum, half_df, logfact)
    m = levels.min(axis=1) if K else np.zeros(n)
    thr = m + tie_rtol * np.maximum(1.0, np.abs(m))
    best = np.argmax(levels <= thr[:, None], axis=1)
    rows = np.arange(n)
    log_level = levels[rows, best]
    weights = np.zeros((n, K), dtype=np.uint8)
    selected = np.arange(K) <= best[:, None]
    np.put_along_axis(weights, order, selected.astype(np.uint8), axis=1)
    return log_level, weights, (best + 1).astype(np.int64)
