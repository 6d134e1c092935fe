"""Simulation laboratory for the asymptotics of AW-Fisher.

Studies are two-sample z-tests with ``n/2`` observations per arm, so the mean
difference is ``Normal(mu, 4/n)`` and the two-sided p-value is
``2 * Phi(-|delta| * sqrt(n) / 2)``. On top of that generator this module
estimates weight error rates over a sample-size grid, fits the decay laws
``a n exp(-b n)`` and ``1 / (a + b n)``, and estimates exact slopes
``-(2/n) log p`` for a single study, Fisher and AW-Fisher.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy import special

from . import kernels
from ._parallel import chunk_bounds, map_ordered, substream
from .errors import NumericalError
from .nulldist import MIN_TAIL_COUNT, NullTable

_STREAM_RATES = 1
_STREAM_SLOPES = 2
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class StudyConfig:
    """Effect size ``effect`` and sample-size share ``lam`` of one study."""

    effect: float
    lam: float = 1.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"lam must be positive, got {self.lam}")


class ErrorKind(str, Enum):
    MISS = "miss"
    FALSE_INCLUSION = "false_inclusion"


class FitForm(str, Enum):
    N_EXP_DECAY = "n_exp_decay"
    RECIPROCAL_LINEAR = "reciprocal_linear"


class SlopeMethod(str, Enum):
    SINGLE_STUDY = "single_study"
    FISHER = "fisher"
    AW_FISHER = "aw_fisher"


@dataclass(frozen=True)
class RatePoint:
    n: int
    study: int
    kind: ErrorKind
    estimate: float
    reps: int

    @property
    def stderr(self) -> float:
        return math.sqrt(self.estimate * (1.0 - self.estimate) / self.reps)


@dataclass(frozen=True)
class FitResult:
    form: FitForm
    a: float
    b: float
    r_squared: float
    n_points: int
    n_dropped: int = 0

    @property
    def decaying(self) -> bool:
        return self.b > 1e-12 * max(1.0, abs(self.a))

    def predict(self, n):
        n = np.asarray(n, dtype=np.float64)
        if self.form is FitForm.N_EXP_DECAY:
            return self.a * n * np.exp(-self.b * n)
        return 1.0 / (self.a + self.b * n)


@dataclass(frozen=True)
class SlopeEstimate:
    method: SlopeMethod
    n: int
    estimate: float
    reps: int
    stderr: float
    study: Optional[int] = None
    n_bound_fallback: int = 0


def study_sample_size(n: int, lam: float = 1.0) -> int:
    """Per-study sample size ``round(lam * n)``, rounded to an even number >= 2."""
    return max(2, 2 * int(round(lam * n / 2.0)))


def _check_n(n):
    if int(n) != n or n < 2 or n % 2:
        raise ValueError(f"sample size must be an even integer >= 2, got {n}")


def z_test_log_pvalue(delta, n):
    """Log two-sided p-value of the two-sample z-test for mean difference ``delta``."""
    z = np.abs(np.asarray(delta, dtype=np.float64)) * (math.sqrt(n) / 2.0)
    return np.minimum(0.0, _LOG2 + special.log_ndtr(-z))


def simulate_log_pvalues(n: int, mu: float, size, rng) -> np.ndarray:
    """Log p-values of ``size`` independent simulated studies of size ``n``."""
    _check_n(n)
    delta = rng.normal(mu, 2.0 / math.sqrt(n), size=size)
    return z_test_log_pvalue(delta, n)


def simulate_study_pvalue(n: int, mu: float, rng) -> float:
    """Simulate one study with ``n`` subjects and return its two-sided p-value."""
    return float(np.exp(simulate_log_pvalues(n, mu, None, rng)))


def _simulate_matrix(configs, n, size, rng):
    # One column per study; shift = mu * sqrt(n_k) / 2 on the z scale.
    sizes = np.array([study_sample_size(n, c.lam) for c in configs], dtype=np.float64)
    shift = np.array([c.effect for c in configs]) * np.sqrt(sizes) / 2.0
    z = rng.standard_normal((size, len(configs))) + shift
    return np.minimum(0.0, _LOG2 + special.log_ndtr(-np.abs(z)))


def _rate_chunk(configs, n, seed, g, index, size):
    rng = substream(seed, _STREAM_RATES, g, index)
    logp = _simulate_matrix(configs, n, size, rng)
    _, weights, _ = kernels.aw_sorted_batch(logp)
    return weights.sum(axis=0, dtype=np.int64)


def estimate_weight_error_rates(
    configs: Sequence[StudyConfig],
    n_grid: Sequence[int],
    reps: int,
    seed: int,
    threads=None,
) -> list:
    """Estimate per-study weight error rates over a grid of sample sizes.

    For a study with nonzero effect the rate is the miss rate
    ``P(w_k = 0)``; for a zero-effect study it is the false-inclusion rate
    ``P(w_k = 1)``. Returns one :class:`RatePoint` per (n, study).
    """
    configs = list(configs)
    n_grid = [int(n) for n in n_grid]
    if not configs:
        raise ValueError("at least one study config is required")
    if not n_grid:
        raise ValueError("the sample-size grid is empty")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    for n in n_grid:
        _check_n(n)

    tasks = [
        (g, i, hi - lo)
        for g in range(len(n_grid))
        for i, (lo, hi) in enumerate(chunk_bounds(reps))
    ]
    counts = map_ordered(
        lambda t: (t[0], _rate_chunk(configs, n_grid[t[0]], seed, *t)), tasks, threads
    )
    selected = np.zeros((len(n_grid), len(configs)), dtype=np.int64)
    for g, c in counts:
        selected[g] += c

    points = []
    for g, n in enumerate(n_grid):
        for k, cfg in enumerate(configs):
            if cfg.effect != 0:
                kind, errors = ErrorKind.MISS, reps - selected[g, k]
            else:
                kind, errors = ErrorKind.FALSE_INCLUSION, selected[g, k]
            points.append(RatePoint(n, k, kind, float(errors) / reps, reps))
    return points


def _usable(points, min_points):
    arr = np.asarray([(float(n), float(r)) for n, r in points], dtype=np.float64).reshape(-1, 2)
    keep = arr[:, 1] > 0
    dropped = int((~keep).sum())
    if dropped:
        warnings.warn(f"dropped {dropped} zero-rate point(s) from the fit", stacklevel=3)
    arr = arr[keep]
    if arr.shape[0] < min_points:
        raise NumericalError(
            f"need at least {min_points} points with positive rate, got {arr.shape[0]}"
        )
    return arr[:, 0], arr[:, 1], dropped


def _r_squared(y, fitted):
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        return 1.0 if ss_res <= 1e-24 * max(1.0, float(np.sum(y ** 2))) else 0.0
    return min(1.0, max(0.0, 1.0 - ss_res / ss_tot))


def fit_n_exp_decay(points) -> FitResult:
    """Fit ``rate = a n exp(-b n)`` by OLS of ``log(rate) - log(n)`` on ``n``.

    ``r_squared`` is computed on the ``log(rate)`` scale. Zero rates are
    dropped (counted in ``n_dropped``).
    """
    n, rate, dropped = _usable(points, 3)
    y = np.log(rate) - np.log(n)
    slope, intercept = np.polyfit(n, y, 1)
    a, b = math.exp(float(intercept)), -float(slope)
    fitted = np.log(a) + np.log(n) - b * n
    return FitResult(FitForm.N_EXP_DECAY, a, b, _r_squared(np.log(rate), fitted), n.size, dropped)


def fit_reciprocal_linear(points) -> FitResult:
    """Fit ``rate = 1 / (a + b n)`` by OLS of ``1/rate`` on ``n``."""
    n, rate, dropped = _usable(points, 2)
    y = 1.0 / rate
    b, a = (float(v) for v in np.polyfit(n, y, 1))
    if abs(b) <= 1e-12 * max(1.0, abs(a)):
        b = 0.0
    return FitResult(
        FitForm.RECIPROCAL_LINEAR, float(a), float(b), _r_squared(y, a + b * n), n.size, dropped
    )


def fit_rate_curves(rate_points) -> list:
    """Fit each study's rate curve with the law matching its error kind.

    Returns ``(study, kind, FitResult)`` triples; studies whose curve cannot
    be fitted are skipped.
    """
    by_key = {}
    for pt in rate_points:
        by_key.setdefault((pt.study, pt.kind), []).append((pt.n, pt.estimate))
    out = []
    for (study, kind), pts in sorted(by_key.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        fitter = fit_n_exp_decay if kind is ErrorKind.MISS else fit_reciprocal_linear
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                out.append((study, kind, fitter(sorted(pts))))
        except NumericalError:
            continue
    return out


def _slope_chunk(method, configs, n, seed, index, size, table, study):
    rng = substream(seed, _STREAM_SLOPES, index)
    logp = _simulate_matrix(configs, n, size, rng)
    K = logp.shape[1]
    if method is SlopeMethod.SINGLE_STUDY:
        return logp[:, study], 0
    if method is SlopeMethod.FISHER:
        T = -2.0 * logp.sum(axis=1)
        return kernels.chi2_even_log_sf_many(T, K), 0
    log_level, _, _ = kernels.aw_sorted_batch(logp)
    counts = table.tail_counts(-log_level)
    log_upper = np.minimum(0.0, log_level + math.log(2.0 ** K - 1.0))
    log_mc = np.log((counts + 1.0) / (table.draws + 1.0))
    saturated = counts < MIN_TAIL_COUNT
    return np.where(saturated, log_upper, log_mc), int(saturated.sum())


def estimate_exact_slope(
    method,
    configs: Sequence[StudyConfig],
    n: int,
    reps: int,
    seed: int,
    table: Optional[NullTable] = None,
    threads=None,
    study: Optional[int] = None,
) -> SlopeEstimate:
    """Monte Carlo estimate of a method's exact slope at average sample size ``n``.

    Averages ``-(2/n) log p`` over ``reps`` replicates. ``single_study``
    uses the p-value of study ``study`` (default 0). ``aw_fisher`` needs a null table for the
    same K; replicates whose statistic lies beyond the table's resolvable
    tail use the Bonferroni upper bound instead.

    The replicate data depend only on ``(configs, n, seed)``, so different
    methods called with the same seed see the same simulated p-values.
    """
    method = SlopeMethod(method)
    configs = list(configs)
    _check_n(n)
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if not configs:
        raise ValueError("at least one study config is required")
    if method is SlopeMethod.SINGLE_STUDY:
        study = 0 if study is None else int(study)
        if not 0 <= study < len(configs):
            raise ValueError(f"study index {study} out of range for {len(configs)} studies")
    elif study is not None:
        raise ValueError("study index only applies to single_study")
    if method is SlopeMethod.AW_FISHER:
        if table is None:
            raise ValueError("aw_fisher slope estimation requires a null table")
        if table.k != len(configs):
            raise ValueError(f"null table has k={table.k} but {len(configs)} studies were given")

    parts = map_ordered(
        lambda ib: _slope_chunk(method, configs, n, seed, ib[0], ib[1][1] - ib[1][0], table, study),
        enumerate(chunk_bounds(reps)),
        threads,
    )
    values = -(2.0 / n) * np.concatenate([p[0] for p in parts])
    fallback = sum(p[1] for p in parts)
    stderr = float(values.std(ddof=1) / math.sqrt(reps)) if reps > 1 else math.nan
    return SlopeEstimate(method, int(n), float(values.mean()), int(reps), stderr, study, fallback)


RATE_COLUMNS = ("n", "study", "kind", "estimate", "reps", "stderr")
FIT_COLUMNS = ("study", "kind", "form", "a", "b", "r_squared", "n_points", "n_dropped")
SLOPE_COLUMNS = ("method", "study", "n", "estimate", "reps", "stderr", "n_bound_fallback")


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


def write_rate_points(points, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(RATE_COLUMNS)
        for p in points:
            w.writerow([p.n, p.study, p.kind.value, repr(p.estimate), p.reps, repr(p.stderr)])


def read_rate_points(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            RatePoint(int(r["n"]), int(r["study"]), ErrorKind(r["kind"]), float(r["estimate"]), int(r["reps"]))
            for r in csv.DictReader(fh)
        ]


def write_fits(fits, path) -> None:
    """Write ``(study, kind, FitResult)`` triples."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(FIT_COLUMNS)
        for study, kind, f in fits:
            w.writerow(
                [study, kind.value, f.form.value, repr(f.a), repr(f.b), repr(f.r_squared), f.n_points, f.n_dropped]
            )


def read_fits(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            (
                int(r["study"]),
                ErrorKind(r["kind"]),
                FitResult(
                    FitForm(r["form"]), float(r["a"]), float(r["b"]), float(r["r_squared"]),
                    int(r["n_points"]), int(r["n_dropped"]),
                ),
            )
            for r in csv.DictReader(fh)
        ]


def write_slopes(estimates, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = _writer(fh)
        w.writerow(SLOPE_COLUMNS)
        for e in estimates:
            w.writerow(
                [e.method.value, "" if e.study is None else e.study, e.n, repr(e.estimate),
                 e.reps, repr(e.stderr), e.n_bound_fallback]
            )
