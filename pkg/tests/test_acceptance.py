"""Acceptance criteria, run at full size.

Each test records one PASS/FAIL line, printed in the pytest terminal summary.
"""
import math
import subprocess
import sys
import time
import warnings

import mpmath
import numpy as np
import pytest

from awfisher import kernels
from awfisher.asymlab import (
    ErrorKind,
    StudyConfig,
    estimate_exact_slope,
    estimate_weight_error_rates,
    fit_n_exp_decay,
    fit_reciprocal_linear,
)
from awfisher.cli import main
from awfisher.metacli import FeatureMatrix, write_matrix
from awfisher.nulldist import bonferroni_bounds_many, build_null_table, save_null_table, within_bounds
from awfisher.pcombine import aw_exhaustive_batch, aw_statistic_batch

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.slow

GRID = list(range(200, 1001, 100))


def report(label, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_ac01_oracle_equivalence():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    worst, mismatches, total = 0.0, 0, 0
    for K in range(1, 11):
        u = 1.0 - rng.random((10_000, K))
        # half the rows pushed into the tail to exercise small p-values
        u[5000:] **= rng.uniform(1, 30, (5000, 1))
        logp = np.log(u)
        s, w = aw_statistic_batch(logp)
        ll, we = aw_exhaustive_batch(logp)
        mismatches += int(np.any(w != we, axis=1).sum())
        worst = max(worst, float(np.max(np.abs(s + ll))))
        total += u.shape[0]
    elapsed = time.perf_counter() - start
    ok = mismatches == 0 and worst < 1e-10 and elapsed < 60
    report("AC1 oracle equivalence", ok,
           f"{total} vectors K=1..10, weight mismatches={mismatches}, max|dS|={worst:.2e}, {elapsed:.1f}s")


def test_ac02_special_function_cross_check():
    mpmath.mp.dps = 30
    half_df = np.repeat(np.arange(1, 21), 500)
    t = np.tile(np.linspace(0.0, 400.0, 500), 20)
    ours = np.exp(kernels.chi2_even_log_sf_many(t, half_df))
    worst = 0.0
    for ti, hi, oi in zip(t, half_df, ours):
        ref = mpmath.gammainc(int(hi), a=mpmath.mpf(float(ti)) / 2, regularized=True)
        worst = max(worst, float(abs((mpmath.mpf(float(oi)) - ref) / ref)))
    report("AC2 chi2 survival vs incomplete gamma", worst < 1e-10,
           f"{t.size} points, df 2..40, t in [0,400], max rel err={worst:.2e}")


def test_ac03_null_calibration():
    from scipy import stats

    table = build_null_table(3, 1_000_000, seed=303)
    rng = np.random.default_rng(304)
    s, _ = aw_statistic_batch(np.log(1.0 - rng.random((100_000, 3))))
    d = stats.kstest(table.p_values(s), "uniform").statistic
    d_crit = 1.63 / math.sqrt(100_000)

    t1 = build_null_table(1, 1_000_000, seed=305)
    worst_z = 0.0
    for x in range(1, 11):
        expected = math.exp(-x)
        emp = t1.tail_counts(float(x)) / t1.draws
        worst_z = max(worst_z, abs(emp - expected) / math.sqrt(expected * (1 - expected) / t1.draws))
    ok = d < d_crit and worst_z < 3
    report("AC3 null calibration", ok,
           f"K=3 KS D={d:.5f} (< {d_crit:.5f}); K=1 survival max |z|={worst_z:.2f} at s=1..10")


def test_ac04_bonferroni_sandwich():
    rng = np.random.default_rng(404)
    ks = rng.integers(1, 7, 1000)
    tables = {k: build_null_table(int(k), 1_000_000, seed=400 + int(k)) for k in range(1, 7)}
    soft = hard = 0
    for k in range(1, 7):
        idx = np.flatnonzero(ks == k)
        u = 1.0 - rng.random((idx.size, k))
        u **= rng.uniform(0.5, 4.0, (idx.size, 1))
        s, _ = aw_statistic_batch(np.log(u))
        table = tables[k]
        p_mc = table.p_values(s)
        lower, upper = bonferroni_bounds_many(-s, k)
        outside = (p_mc < lower) | (p_mc > upper)
        beyond = ~within_bounds(p_mc, lower, upper, table.draws, nse=3.0)
        soft += int(outside.sum())
        hard += int(beyond.sum())
    report("AC4 Bonferroni sandwich", hard == 0,
           f"1000 vectors K<=6, {soft} outside raw bounds, {hard} beyond 3 MC SE")


def _monotone(curve):
    return all(
        b.estimate <= a.estimate + 3 * math.hypot(a.stderr, b.stderr) for a, b in zip(curve, curve[1:])
    )


def test_ac05_experiment_one():
    effects = (0.2, 0.3, 0.4, 0.5)
    start = time.perf_counter()
    pts = estimate_weight_error_rates([StudyConfig(e) for e in effects], GRID, 100_000, seed=505)
    elapsed = time.perf_counter() - start
    details, ok = [], elapsed <= 15 * 60
    for k, mu in enumerate(effects):
        curve = [p for p in pts if p.study == k]
        mono = _monotone(curve)
        ok &= mono
        if mu >= 0.3:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                fit = fit_n_exp_decay([(p.n, p.estimate) for p in curve])
            ok &= fit.r_squared >= 0.95
            details.append(f"mu={mu}: mono={mono} R2={fit.r_squared:.4f} b={fit.b:.4g}")
        else:
            details.append(f"mu={mu}: mono={mono}")
    report("AC5 experiment 1 miss rates", ok, "; ".join(details) + f"; {elapsed:.1f}s")


def test_ac06_experiment_two():
    effects = (0.4, 0.4, 0.4, 0.0)
    pts = estimate_weight_error_rates([StudyConfig(e) for e in effects], GRID, 100_000, seed=606)
    curve = [p for p in pts if p.study == 3]
    assert all(p.kind is ErrorKind.FALSE_INCLUSION for p in curve)
    fit = fit_reciprocal_linear([(p.n, p.estimate) for p in curve])
    ok = fit.r_squared >= 0.95 and fit.b > 0
    report("AC6 experiment 2 false inclusion", ok,
           f"study 4: a={fit.a:.4g} b={fit.b:.4g} R2={fit.r_squared:.4f}, mono={_monotone(curve)}")


def test_ac07_slope_oracle():
    alt = estimate_exact_slope("single_study", [StudyConfig(0.5)], 10_000, 10_000, seed=707)
    null = estimate_exact_slope("single_study", [StudyConfig(0.0)], 10_000, 10_000, seed=708)
    rel = abs(alt.estimate - 0.0625) / 0.0625
    ok = rel < 0.05 and null.estimate < 0.005
    report("AC7 single-study slope", ok,
           f"mu=0.5: {alt.estimate:.5f} (rel err {rel:.3%}); mu=0: {null.estimate:.2e}")


def test_ac08_abo():
    cfg = [StudyConfig(0.5)] * 3
    table = build_null_table(3, 1_000_000, seed=808)
    fisher = estimate_exact_slope("fisher", cfg, 10_000, 10_000, seed=809)
    aw = estimate_exact_slope("aw_fisher", cfg, 10_000, 10_000, seed=809, table=table)
    rel = abs(aw.estimate - fisher.estimate) / fisher.estimate
    report("AC8 AW slope equals Fisher slope", rel < 0.05,
           f"fisher={fisher.estimate:.5f} aw={aw.estimate:.5f} rel diff {rel:.3%}")


def _run_all(workdir, threads, matrix_csv, capsys):
    workdir.mkdir()
    t = str(threads)
    w = lambda name: str(workdir / name)  # noqa: E731
    codes = [
        main(["null", "build", "-k", "3", "--draws", "200000", "--seed", "7", "-o", w("k3.awnull"),
              "--threads", t]),
        main(["combine", "--input", str(matrix_csv), "--null-table", w("k3.awnull"), "--fdr", "0.01",
              "--out", w("combine.csv"), "--categories", w("cats.csv"), "--threads", t]),
        main(["combine", "--input", str(matrix_csv), "--draws", "100000", "--seed", "3",
              "--out", w("combine_fresh.csv"), "--threads", t]),
        main(["sim", "rates", "--effects", "0.2,0.3,0.4,0.5", "--n", "200:1000:100", "--reps", "150000",
              "--seed", "1", "--out-rates", w("rates.csv"), "--out-fits", w("fits.csv"), "--threads", t]),
        main(["sim", "slopes", "--n", "10000", "--reps", "140000", "--seed", "2", "--draws", "200000",
              "--out", w("slopes.csv"), "--threads", t]),
        main(["plotdata", "--rates", w("rates.csv"), "--fits", w("fits.csv"), "--results", w("combine.csv"),
              "--out-dir", w("plots"), "--grid-points", "51"]),
    ]
    capsys.readouterr()
    codes.append(main(["null", "inspect", w("k3.awnull")]))
    (workdir / "inspect.txt").write_text(capsys.readouterr().out)
    return codes


def test_ac09_determinism(tmp_path, capsys):
    rng = np.random.default_rng(909)
    p = 1.0 - rng.random((5000, 3))
    p[:500] **= 15
    matrix_csv = tmp_path / "m.csv"
    write_matrix(FeatureMatrix(tuple(f"g{i}" for i in range(5000)), ("a", "b", "c"), p), matrix_csv)
    codes_a = _run_all(tmp_path / "t1", 1, matrix_csv, capsys)
    codes_b = _run_all(tmp_path / "t4", 4, matrix_csv, capsys)
    files = sorted(f.relative_to(tmp_path / "t1") for f in (tmp_path / "t1").rglob("*") if f.is_file())
    differing = [str(f) for f in files if (tmp_path / "t1" / f).read_bytes() != (tmp_path / "t4" / f).read_bytes()]
    ok = codes_a == codes_b == [0] * 7 and not differing and len(files) >= 10
    report("AC9 determinism across --threads", ok,
           f"{len(files)} output files compared (threads 1 vs 4), differing={differing or 'none'}")


def test_ac10_throughput(tmp_path):
    rng = np.random.default_rng(1010)
    p = 1.0 - rng.random((20_000, 5))
    p[:2000, :3] **= 10
    matrix_csv = tmp_path / "m.csv"
    write_matrix(FeatureMatrix(tuple(f"g{i}" for i in range(20_000)), tuple("abcde"), p), matrix_csv)
    table_path = tmp_path / "k5.awnull"
    save_null_table(build_null_table(5, 1_000_000, seed=5), table_path)
    start = time.perf_counter()
    proc = subprocess.run(
        [sys.executable, "-m", "awfisher.cli", "combine", "--input", str(matrix_csv),
         "--null-table", str(table_path), "--fdr", "0.01", "--out", str(tmp_path / "r.csv")],
        capture_output=True, text=True,
    )
    elapsed = time.perf_counter() - start
    ok = proc.returncode == 0 and elapsed < 10
    report("AC10 combine throughput", ok,
           f"20000 x 5 with 1e6-draw table in {elapsed:.2f}s (backend {kernels.BACKEND})")

