"""Batch analysis of feature x study p-value matrices.

Input matrices are CSV files whose header is ``feature_id`` followed by one
column per study. Results are written as CSV with floats in ``repr`` form so
that re-reading them reproduces every value exactly.
"""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from . import pcombine
from .errors import DataValidationError
from .nulldist import NullTable, bonferroni_bounds_many, within_bounds
from .pcombine import Method

RESULT_COLUMNS = (
    "feature_id",
    "statistic",
    "weights",
    "p_mc",
    "p_lower",
    "p_upper",
    "q_value",
    "significant",
    "bounds_ok",
)


@dataclass(frozen=True)
class FeatureMatrix:
    feature_ids: tuple
    study_names: tuple
    values: np.ndarray
    dropped: int = 0

    @property
    def k(self) -> int:
        return len(self.study_names)

    def __len__(self):
        return len(self.feature_ids)


@dataclass(frozen=True)
class FeatureResult:
    feature_id: str
    statistic: float
    weights: str
    p_mc: float
    p_lower: float
    p_upper: float
    q_value: float
    significant: bool
    bounds_ok: bool = True

    @property
    def category(self) -> str:
        return self.weights


def _parse_p(text):
    try:
        value = float(text)
    except ValueError:
        return None, f"not a number: {text!r}"
    if not 0.0 < value <= 1.0:
        return None, f"p-value {text!r} outside (0, 1]"
    return value, None


def load_matrix(path, on_invalid: str = "error") -> FeatureMatrix:
    """Read a p-value matrix CSV.

    With ``on_invalid="error"`` the first bad cell raises
    :class:`DataValidationError` naming its row and column; with ``"drop"``
    rows containing bad cells are removed and counted in ``dropped``.
    Duplicate feature ids and ragged rows are always errors.
    """
    if on_invalid not in ("error", "drop"):
        raise ValueError(f"on_invalid must be 'error' or 'drop', got {on_invalid!r}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataValidationError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if len(header) < 2 or header[0] != "feature_id":
            raise DataValidationError(
                f"{path}: header must be 'feature_id' followed by at least one study name"
            )
        studies = tuple(header[1:])
        if len(set(studies)) != len(studies):
            raise DataValidationError(f"{path}: duplicate study names in header")
        ids, rows, seen, dropped = [], [], set(), 0
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataValidationError(
                    f"{path}: line {line_no} has {len(row)} fields, expected {len(header)}"
                )
            fid = row[0].strip()
            if not fid:
                raise DataValidationError(f"{path}: line {line_no} has an empty feature_id")
            if fid in seen:
                raise DataValidationError(f"{path}: duplicate feature_id {fid!r} on line {line_no}")
            seen.add(fid)
            values = []
            for col, cell in zip(studies, row[1:]):
                value, problem = _parse_p(cell.strip())
                if problem is not None:
                    if on_invalid == "error":
                        raise DataValidationError(
                            f"{path}: line {line_no}, feature {fid!r}, study {col!r}: {problem}"
                        )
                    values = None
                    break
                values.append(value)
            if values is None:
                dropped += 1
                continue
            ids.append(fid)
            rows.append(values)
    values = np.array(rows, dtype=np.float64).reshape(len(rows), len(studies))
    return FeatureMatrix(tuple(ids), studies, values, dropped)


def write_matrix(matrix: FeatureMatrix, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("feature_id",) + matrix.study_names)
        for fid, row in zip(matrix.feature_ids, matrix.values):
            writer.writerow([fid] + [repr(float(v)) for v in row])


def benjamini_hochberg(p) -> np.ndarray:
    """Benjamini-Hochberg adjusted p-values (q-values), in input order."""
    p = np.asarray(p, dtype=np.float64)
    m = p.size
    if m == 0:
        return p.copy()
    order = np.argsort(p, kind="stable")
    scaled = p[order] * (m / np.arange(1, m + 1))
    q_sorted = np.minimum(1.0, np.minimum.accumulate(scaled[::-1])[::-1])
    q_sorted = np.maximum(q_sorted, p[order])
    q = np.empty(m)
    q[order] = q_sorted
    return q


def bh_reject(p, fdr) -> np.ndarray:
    """Boolean mask of BH rejections at level ``fdr``, in input order.

    The step-up rule ``p_(j) * m <= j * fdr`` is decided exactly: float
    comparisons that land within rounding error of a tie are redone in
    rational arithmetic, so ties on the threshold are never lost to an ulp.
    """
    p = np.asarray(p, dtype=np.float64)
    m = p.size
    mask = np.zeros(m, dtype=bool)
    if m == 0:
        return mask
    order = np.argsort(p, kind="stable")
    ps = p[order]
    j = np.arange(1, m + 1)
    lhs, rhs = ps * m, j * fdr
    passed = lhs <= rhs
    near = np.abs(lhs - rhs) <= 1e-12 * np.maximum(rhs, np.finfo(float).tiny)
    exact_fdr = Fraction(fdr)
    for i in np.flatnonzero(near):
        passed[i] = Fraction(float(ps[i])) * m <= int(j[i]) * exact_fdr
    hits = np.flatnonzero(passed)
    if hits.size:
        mask[order[: hits[-1] + 1]] = True
    return mask


def analyze(
    matrix: FeatureMatrix,
    table: Optional[NullTable] = None,
    fdr: float = 0.05,
    method=Method.AW_FISHER,
    threads=None,
    p_column: str = "mc",
) -> list:
    """Combine every feature's p-values and apply BH FDR control.

    For ``aw_fisher`` each feature gets its statistic, weight bit-string,
    Monte Carlo p-value from ``table`` and the Bonferroni bounds; BH runs on
    ``p_mc`` (or on ``p_upper`` with ``p_column="upper"``). Other methods
    use their analytic p-value for all three p columns and carry no weights.
    Results are sorted by p-value, then feature id.
    """
    method = Method(method)
    if p_column not in ("mc", "upper"):
        raise ValueError(f"p_column must be 'mc' or 'upper', got {p_column!r}")
    if not 0.0 < fdr <= 1.0:
        raise ValueError(f"fdr must lie in (0, 1], got {fdr}")
    n = len(matrix)
    logp = np.log(matrix.values) if n else np.zeros((0, matrix.k))

    if method is Method.AW_FISHER:
        if table is None:
            raise ValueError("aw_fisher analysis requires a null table")
        if table.k != matrix.k:
            raise DataValidationError(
                f"null table was built for k={table.k} but the matrix has {matrix.k} studies"
            )
        stat, weights = pcombine.aw_statistic_batch(logp, threads=threads)
        p_mc = table.p_values(stat)
        lower, upper = bonferroni_bounds_many(-stat, matrix.k)
        ok = within_bounds(p_mc, lower, upper, table.draws)
        bits = ["".join("1" if b else "0" for b in row) for row in weights]
    else:
        combined = [pcombine.comparator_combine(row, method) for row in matrix.values]
        stat = np.array([c.statistic for c in combined])
        p_mc = np.exp([c.log_p for c in combined])
        lower = upper = p_mc
        ok = np.ones(n, dtype=bool)
        bits = [""] * n

    bh_input = p_mc if p_column == "mc" else upper
    q = benjamini_hochberg(bh_input)
    reject = bh_reject(bh_input, fdr)
    results = [
        FeatureResult(
            feature_id=matrix.feature_ids[i],
            statistic=float(stat[i]),
            weights=bits[i],
            p_mc=float(p_mc[i]),
            p_lower=float(lower[i]),
            p_upper=float(upper[i]),
            q_value=float(q[i]),
            significant=bool(reject[i]),
            bounds_ok=bool(ok[i]),
        )
        for i in range(n)
    ]
    key = (lambda r: (r.p_mc, r.feature_id)) if p_column == "mc" else (lambda r: (r.p_upper, r.feature_id))
    results.sort(key=key)
    return results


def categorize(results) -> list:
    """Counts of significant features per weight category, most frequent first."""
    counts = Counter(r.category for r in results if r.significant)
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def write_results(results, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_COLUMNS)
        for r in results:
            writer.writerow(
                [
                    r.feature_id,
                    repr(r.statistic),
                    r.weights,
                    repr(r.p_mc),
                    repr(r.p_lower),
                    repr(r.p_upper),
                    repr(r.q_value),
                    int(r.significant),
                    int(r.bounds_ok),
                ]
            )


def read_results(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
            raise DataValidationError(f"{path}: unexpected result columns {reader.fieldnames}")
        return [
            FeatureResult(
                feature_id=row["feature_id"],
                statistic=float(row["statistic"]),
                weights=row["weights"],
                p_mc=float(row["p_mc"]),
                p_lower=float(row["p_lower"]),
                p_upper=float(row["p_upper"]),
                q_value=float(row["q_value"]),
                significant=row["significant"] == "1",
                bounds_ok=row["bounds_ok"] == "1",
            )
            for row in reader
        ]


def write_categories(categories, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("category", "count"))
        writer.writerows(categories)

