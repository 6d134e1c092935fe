"""P-value combination statistics.

Fisher's method, the adaptively weighted (AW) Fisher statistic and the
classical comparators (Stouffer, logit, min-P, max-P). Every significance
level is handled as a natural log so that levels far below the smallest
double stay representable.

The AW statistic for p-values ``p_1..p_K`` is

    S = -min_w log L(w),   L(w) = P(chi2_{2 d(w)} > -2 sum_k w_k log p_k)

over nonzero binary weights ``w`` with ``d(w)`` selected studies. Ties in
``L`` resolve to the fewest selected studies, then to the lexicographically
smallest weight vector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import special, stats

from . import kernels
from .errors import PValueDomainError

MAX_EXHAUSTIVE_K = 25


class Method(str, Enum):
    FISHER = "fisher"
    AW_FISHER = "aw_fisher"
    STOUFFER = "stouffer"
    LOGIT = "logit"
    MIN_P = "min_p"
    MAX_P = "max_p"


@dataclass(frozen=True)
class AWResult:
    """Outcome of the AW-Fisher weight search for one p-value vector."""

    statistic: float
    weights: tuple
    log_level: float

    @property
    def bits(self) -> str:
        return "".join(str(b) for b in self.weights)

    @property
    def n_selected(self) -> int:
        return sum(self.weights)


@dataclass(frozen=True)
class CombinedResult:
    method: Method
    statistic: float
    log_p: Optional[float]

    @property
    def p_value(self) -> Optional[float]:
        return None if self.log_p is None else math.exp(self.log_p)


def validate_pvalues(p) -> np.ndarray:
    """Return ``p`` as a 1-d float array, raising on values outside (0, 1]."""
    arr = np.asarray(p, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise PValueDomainError("p-values must form a non-empty 1-d sequence")
    bad = ~((arr > 0.0) & (arr <= 1.0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise PValueDomainError(
            f"p-value at index {i} is {arr[i]!r}; must lie in (0, 1]", index=i
        )
    return arr


def fisher_statistic(p: Sequence[float]) -> float:
    """Fisher's statistic ``-2 * sum(log p_k)``."""
    arr = validate_pvalues(p)
    return float(-2.0 * np.log(arr).sum())


def chi2_even_log_sf(t: float, half_df: int) -> float:
    """Natural log of the chi-square survival function at ``t`` with ``2 * half_df`` df.

    Uses the closed form ``exp(-t/2) * sum_{j<half_df} (t/2)^j / j!`` with the
    sum taken in log space, so the result stays finite when the survival
    probability itself underflows.
    """
    if half_df < 1 or int(half_df) != half_df:
        raise ValueError(f"half_df must be a positive integer, got {half_df!r}")
    if not t >= 0.0:
        raise ValueError(f"t must be non-negative, got {t!r}")
    return float(kernels.chi2_even_log_sf_many(np.array([t]), np.array([int(half_df)]))[0])


def _candidate_masks(K):
    """All nonzero weight vectors of length K in tie-break order.

    Ordered by number of ones, then lexicographically (study 0 most significant).
    Yields ``(count, bits)`` blocks with ``bits`` an ``(m, K)`` uint8 array.
    """
    shifts = np.arange(K - 1, -1, -1, dtype=np.int64)
    masks = np.arange(1, 1 << K, dtype=np.int64)
    bits = ((masks[:, None] >> shifts) & 1).astype(np.uint8)
    counts = bits.sum(axis=1)
    for c in range(1, K + 1):
        yield c, bits[counts == c]


def _exhaustive_levels(logp):
    """Log-levels of every candidate for each row of ``logp``, in tie-break order."""
    n, K = logp.shape
    blocks, all_bits = [], []
    for c, bits in _candidate_masks(K):
        T = -2.0 * (logp @ bits.T.astype(np.float64))
        blocks.append(kernels.chi2_even_log_sf_many(T, c))
        all_bits.append(bits)
    return np.concatenate(blocks, axis=1), np.concatenate(all_bits, axis=0)


def aw_exhaustive_batch(logp, chunk_rows: int = 2048):
    """Exhaustive AW search over the rows of a log p-value matrix.

    Returns ``(log_level, weights)``. Enumerates all ``2**K - 1`` weight vectors
    per row, so only intended for small K.
    """
    logp = np.asarray(logp, dtype=np.float64)
    n, K = logp.shape
    if not 1 <= K <= MAX_EXHAUSTIVE_K:
        raise ValueError(f"exhaustive search supports 1 <= K <= {MAX_EXHAUSTIVE_K}, got {K}")
    log_level = np.empty(n)
    weights = np.zeros((n, K), dtype=np.uint8)
    for lo in range(0, n, chunk_rows):
        hi = min(lo + chunk_rows, n)
        levels, bits = _exhaustive_levels(logp[lo:hi])
        m = levels.min(axis=1)
        thr = m + kernels.TIE_RTOL * np.maximum(1.0, np.abs(m))
        best = np.argmax(levels <= thr[:, None], axis=1)
        log_level[lo:hi] = levels[np.arange(hi - lo), best]
        weights[lo:hi] = bits[best]
    return log_level, weights


def _exhaustive_single(logp):
    # Two passes over count-blocks keep memory flat for large K.
    K = logp.size
    row = logp[None, :]
    m = math.inf
    for c, bits in _candidate_masks(K):
        T = -2.0 * (row @ bits.T.astype(np.float64))
        m = min(m, float(kernels.chi2_even_log_sf_many(T, c).min()))
    thr = m + kernels.TIE_RTOL * max(1.0, abs(m))
    for c, bits in _candidate_masks(K):
        T = -2.0 * (row @ bits.T.astype(np.float64))
        levels = kernels.chi2_even_log_sf_many(T, c)[0]
        hit = np.flatnonzero(levels <= thr)
        if hit.size:
            return float(levels[hit[0]]), bits[hit[0]]
    raise AssertionError("no candidate reached the minimum")


def aw_statistic_exhaustive(p: Sequence[float]) -> AWResult:
    """AW-Fisher statistic by enumerating every nonzero weight vector."""
    arr = validate_pvalues(p)
    if arr.size > MAX_EXHAUSTIVE_K:
        raise ValueError(
            f"exhaustive search is limited to K <= {MAX_EXHAUSTIVE_K}; "
            f"use aw_statistic_sorted for K = {arr.size}"
        )
    log_level, bits = _exhaustive_single(np.log(arr))
    return AWResult(-log_level, tuple(int(b) for b in bits), log_level)


def aw_statistic_sorted(p: Sequence[float]) -> AWResult:
    """AW-Fisher statistic by the linear search over sorted prefixes.

    For a fixed number of selected studies the level is minimised by taking
    the smallest p-values, so only K candidates need evaluating.
    """
    arr = validate_pvalues(p)
    log_level, weights, _ = kernels.aw_sorted_batch(np.log(arr)[None, :])
    ll = float(log_level[0])
    return AWResult(-ll, tuple(int(b) for b in weights[0]), ll)


def aw_statistic_batch(logp, threads=None):
    """Sorted AW search for many vectors at once.

    ``logp`` is an ``(n, K)`` matrix of natural-log p-values. Returns
    ``(statistic, weights)``. Rows are split into fixed chunks so the
    output does not depend on ``threads``.
    """
    from ._parallel import chunk_bounds, map_ordered

    logp = np.ascontiguousarray(logp, dtype=np.float64)
    n, K = logp.shape
    parts = map_ordered(
        lambda b: kernels.aw_sorted_batch(logp[b[0]:b[1]]), chunk_bounds(n), threads
    )
    if not parts:
        return np.empty(0), np.zeros((0, K), dtype=np.uint8)
    stat = -np.concatenate([part[0] for part in parts])
    weights = np.concatenate([part[1] for part in parts], axis=0)
    return stat, weights


def _logit_log_sf(arr):
    K = arr.size
    with np.errstate(divide="ignore"):
        logit = np.log(arr) - np.log1p(-arr)
    stat = float(-logit.sum())
    if math.isinf(stat):
        return stat, 0.0 if stat < 0 else -math.inf
    # Scaled-t reference: stat * C ~ t_{5K+4}, C^2 = 3(5K+4) / (pi^2 K (5K+2)).
    scale = math.sqrt(3.0 * (5 * K + 4) / (math.pi ** 2 * K * (5 * K + 2)))
    return stat, float(stats.t.logsf(stat * scale, df=5 * K + 4))


def comparator_combine(p: Sequence[float], method) -> CombinedResult:
    """Combine ``p`` with one of the classical methods (or AW-Fisher, without a p-value)."""
    try:
        method = Method(method)
    except ValueError:
        raise ValueError(f"unknown combination method {method!r}") from None
    arr = validate_pvalues(p)
    K = arr.size
    if method is Method.FISHER:
        stat = float(-2.0 * np.log(arr).sum())
        return CombinedResult(method, stat, chi2_even_log_sf(stat, K))
    if method is Method.AW_FISHER:
        return CombinedResult(method, aw_statistic_sorted(arr).statistic, None)
    if method is Method.STOUFFER:
        z = float(-special.ndtri(arr).sum() / math.sqrt(K))
        return CombinedResult(method, z, float(special.log_ndtr(-z)))
    if method is Method.LOGIT:
        stat, log_p = _logit_log_sf(arr)
        return CombinedResult(method, stat, log_p)
    if method is Method.MIN_P:
        pmin = float(arr.min())
        # 1 - (1 - pmin)^K
        log_p = math.log(-math.expm1(K * math.log1p(-pmin))) if pmin < 1.0 else 0.0
        return CombinedResult(method, pmin, log_p)
    pmax = float(arr.max())
    return CombinedResult(method, pmax, K * math.log(pmax))
