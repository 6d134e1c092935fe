"""Null distribution of the AW-Fisher statistic.

Under the complete null the K study p-values are iid Uniform(0, 1), so the
null law of S is sampled directly. A :class:`NullTable` holds the sorted
sample; p-values use the add-one estimator ``(r + 1) / (N + 1)``.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._parallel import chunk_bounds, map_ordered, substream
from .errors import DataValidationError
from .pcombine import aw_statistic_batch

MAGIC = b"AWNULL01"
_HEADER = struct.Struct("<8sQQQ")
_STREAM_NULL = 0

# Below this many table samples at or above s_obs the estimate is noise-dominated.
MIN_TAIL_COUNT = 10


@dataclass(frozen=True)
class NullTable:
    k: int
    draws: int
    seed: int
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=np.float64)
        if s.ndim != 1 or s.size != self.draws:
            raise DataValidationError(
                f"null table holds {s.size} samples but declares {self.draws} draws"
            )
        if s.size and (s[0] < 0 or np.any(np.diff(s) < 0)):
            raise DataValidationError("null table samples must be non-negative and ascending")
        s = s.copy() if s.flags.writeable else s
        s.flags.writeable = False
        object.__setattr__(self, "samples", s)

    def tail_counts(self, s_obs):
        """Number of samples ``>= s_obs`` (vectorised)."""
        s_obs = np.asarray(s_obs, dtype=np.float64)
        return self.draws - np.searchsorted(self.samples, s_obs, side="left")

    def p_values(self, s_obs):
        return (self.tail_counts(s_obs) + 1.0) / (self.draws + 1.0)


@dataclass(frozen=True)
class BoundPair:
    lower: float
    upper: float
    log_lower: float
    log_upper: float


def _check_seed(seed):
    seed = int(seed)
    if not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def _null_chunk(k, seed, index, size):
    rng = substream(seed, _STREAM_NULL, index)
    # 1 - U lies in (0, 1], which keeps log p finite.
    u = 1.0 - rng.random((size, k))
    stat, _ = aw_statistic_batch(np.log(u), threads=1)
    return stat


def build_null_table(k: int, draws: int, seed: int, threads=None) -> NullTable:
    """Sample the AW statistic under the complete null.

    Draws are generated in fixed-size chunks, each from its own substream of
    ``seed``, so the table is identical for any ``threads``.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    seed = _check_seed(seed)
    bounds = chunk_bounds(draws)
    parts = map_ordered(
        lambda ib: _null_chunk(k, seed, ib[0], ib[1][1] - ib[1][0]),
        enumerate(bounds),
        threads,
    )
    samples = np.sort(np.concatenate(parts), kind="stable")
    return NullTable(k=k, draws=draws, seed=seed, samples=samples)


def p_value(s_obs: float, table: NullTable) -> float:
    """Monte Carlo p-value ``P(S >= s_obs)`` with the add-one estimator."""
    return float(table.p_values(s_obs))


def bonferroni_bounds(log_level_obs: float, k: int) -> BoundPair:
    """Bracket ``P(S >= s_obs)`` between ``L_obs`` and ``(2^k - 1) L_obs``.

    ``log_level_obs`` is ``log L_obs = -s_obs``. The upper bound is truncated
    at 1. Both are also returned in log form since ``L_obs`` may underflow.
    """
    if log_level_obs > 0:
        raise ValueError(f"log level must be <= 0, got {log_level_obs}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    log_mult = math.log(2.0 ** k - 1.0) if k < 1000 else k * math.log(2.0)
    log_upper = min(0.0, log_level_obs + log_mult)
    return BoundPair(
        lower=math.exp(log_level_obs),
        upper=math.exp(log_upper),
        log_lower=float(log_level_obs),
        log_upper=log_upper,
    )


def bonferroni_bounds_many(log_level_obs, k):
    """Vectorised :func:`bonferroni_bounds`; returns ``(lower, upper)`` arrays."""
    ll = np.asarray(log_level_obs, dtype=np.float64)
    log_upper = np.minimum(0.0, ll + math.log(2.0 ** k - 1.0))
    return np.exp(ll), np.exp(log_upper)


def within_bounds(p_mc, lower, upper, draws, nse=3.0):
    """True where a Monte Carlo p-value is consistent with ``[lower, upper]``.

    An estimate outside the interval still counts as consistent when it is
    within ``nse`` binomial standard errors of the violated bound. The error
    is evaluated at the bound (score form), which stays reliable when only a
    few table samples lie in the tail. The add-one offset of ``p_mc`` is
    removed first, so a table with no tail hits is compared as ``0 / N``.
    """
    p_mc = np.asarray(p_mc, dtype=np.float64)
    frac = np.maximum(p_mc * (draws + 1.0) - 1.0, 0.0) / draws
    lower = np.asarray(lower, dtype=np.float64)
    upper = np.asarray(upper, dtype=np.float64)
    se_lo = np.sqrt(lower * (1.0 - lower) / draws)
    se_up = np.sqrt(upper * (1.0 - upper) / draws)
    return (frac >= lower - nse * se_lo) & (frac <= upper + nse * se_up)


def save_null_table(table: NullTable, path) -> None:
    header = _HEADER.pack(MAGIC, table.k, table.draws, table.seed)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.asarray(table.samples, dtype="<f8").tobytes())


def load_null_table(path) -> NullTable:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise DataValidationError(f"{path}: too short to be a null table")
    magic, k, draws, seed = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataValidationError(f"{path}: bad magic {magic!r}")
    body = data[_HEADER.size:]
    if len(body) != 8 * draws:
        raise DataValidationError(
            f"{path}: expected {draws} samples, found {len(body) / 8:g}"
        )
    if k < 1:
        raise DataValidationError(f"{path}: k must be >= 1")
    samples = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return NullTable(k=int(k), draws=int(draws), seed=int(seed), samples=samples)
