import math

import numpy as np
import pytest
from scipy import stats

from awfisher.errors import DataValidationError
from awfisher.nulldist import (
    MAGIC,
    NullTable,
    bonferroni_bounds,
    bonferroni_bounds_many,
    build_null_table,
    load_null_table,
    p_value,
    save_null_table,
    within_bounds,
)
from awfisher.pcombine import aw_statistic_batch, aw_statistic_sorted


class TestBuild:
    def test_shape_and_order(self, table_k3):
        s = table_k3.samples
        assert s.size == table_k3.draws == 200_000
        assert np.all(np.diff(s) >= 0) and s[0] >= 0
        assert not s.flags.writeable

    def test_deterministic(self):
        a = build_null_table(3, 150_000, seed=5)
        b = build_null_table(3, 150_000, seed=5)
        np.testing.assert_array_equal(a.samples, b.samples)

    def test_independent_of_threads(self):
        a = build_null_table(2, 200_000, seed=9, threads=1)
        b = build_null_table(2, 200_000, seed=9, threads=4)
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_seed_matters(self):
        a = build_null_table(2, 1000, seed=1)
        b = build_null_table(2, 1000, seed=2)
        assert not np.array_equal(a.samples, b.samples)

    @pytest.mark.parametrize("k,draws,seed", [(0, 10, 1), (1, 0, 1), (1, 10, -1), (1, 10, 2 ** 64)])
    def test_preconditions(self, k, draws, seed):
        with pytest.raises(ValueError):
            build_null_table(k, draws, seed)

    def test_k1_is_exponential(self, table_k1):
        n = table_k1.draws
        for s in (0.5, 1.0, 2.0, 3.0, 5.0):
            emp = table_k1.tail_counts(s) / n
            se = math.sqrt(math.exp(-s) * (1 - math.exp(-s)) / n)
            assert abs(emp - math.exp(-s)) < 3 * se

    def test_k1_ks(self, table_k1):
        assert stats.kstest(table_k1.samples, "expon").pvalue > 0.01

    def test_table_validation(self):
        with pytest.raises(DataValidationError):
            NullTable(k=1, draws=3, seed=0, samples=np.array([0.3, 0.1, 0.2]))
        with pytest.raises(DataValidationError):
            NullTable(k=1, draws=4, seed=0, samples=np.array([0.1, 0.2]))
        with pytest.raises(DataValidationError):
            NullTable(k=1, draws=2, seed=0, samples=np.array([-0.1, 0.2]))


class TestPValue:
    def test_zero(self, table_k3):
        assert p_value(0.0, table_k3) == 1.0

    def test_floor(self, table_k3):
        assert p_value(table_k3.samples[-1] + 1.0, table_k3) == 1.0 / (table_k3.draws + 1)
        assert p_value(math.inf, table_k3) == 1.0 / (table_k3.draws + 1)

    def test_monotone(self, table_k3):
        s = np.linspace(0, 20, 500)
        p = table_k3.p_values(s)
        assert np.all(np.diff(p) <= 0)
        assert np.all(p > 0)

    def test_add_one_estimator(self):
        t = NullTable(k=1, draws=4, seed=0, samples=np.array([1.0, 2.0, 2.0, 3.0]))
        assert p_value(2.0, t) == pytest.approx(4 / 5)
        assert p_value(2.5, t) == pytest.approx(2 / 5)

    def test_k1_at_three(self, table_k1):
        n = table_k1.draws
        se = math.sqrt(math.exp(-3) * (1 - math.exp(-3)) / n)
        assert abs(p_value(3.0, table_k1) - math.exp(-3)) < 3 * se

    def test_sandwich_example(self, table_k2):
        r = aw_statistic_sorted([0.01, 0.5])
        b = bonferroni_bounds(r.log_level, 2)
        assert (b.lower, b.upper) == pytest.approx((0.01, 0.03))
        assert b.lower <= p_value(r.statistic, table_k2) <= b.upper

    def test_uniform_under_null(self, table_k3):
        rng = np.random.default_rng(3)
        s, _ = aw_statistic_batch(np.log(1.0 - rng.random((20_000, 3))))
        assert stats.kstest(table_k3.p_values(s), "uniform").pvalue > 0.01


class TestBonferroni:
    def test_two_study_example(self):
        b = bonferroni_bounds(math.log(0.01), 2)
        assert b.lower == pytest.approx(0.01, rel=1e-14)
        assert b.upper == pytest.approx(0.03, rel=1e-14)

    @pytest.mark.parametrize("k", [1, 3, 10])
    def test_truncation(self, k):
        b = bonferroni_bounds(0.0, k)
        assert (b.lower, b.upper) == (1.0, 1.0)

    def test_tiny_level(self):
        b = bonferroni_bounds(math.log(1e-300), 10)
        assert b.lower == pytest.approx(1e-300, rel=1e-12)
        assert b.upper == pytest.approx(1.023e-297, rel=1e-12)
        assert b.upper > 0

    def test_underflow_keeps_logs(self):
        b = bonferroni_bounds(-2000.0, 4)
        assert b.lower == 0.0 and b.log_lower == -2000.0
        assert b.log_upper == pytest.approx(-2000.0 + math.log(15))

    def test_invariants(self, rng):
        for ll in -rng.exponential(5, 200):
            for k in (1, 2, 6):
                b = bonferroni_bounds(ll, k)
                assert b.lower <= b.upper <= 1.0
                assert b.upper == pytest.approx(min(1.0, (2 ** k - 1) * b.lower), rel=1e-12)

    def test_vectorised_matches_scalar(self, rng):
        ll = -rng.exponential(5, 50)
        lo, up = bonferroni_bounds_many(ll, 4)
        for i, v in enumerate(ll):
            b = bonferroni_bounds(v, 4)
            assert lo[i] == pytest.approx(b.lower) and up[i] == pytest.approx(b.upper)

    def test_rejects_positive_level(self):
        with pytest.raises(ValueError):
            bonferroni_bounds(0.1, 2)


class TestPersistence:
    def test_round_trip(self, tmp_path, table_k2):
        path = tmp_path / "k2.awnull"
        save_null_table(table_k2, path)
        raw = path.read_bytes()
        assert raw[:8] == MAGIC and len(raw) == 32 + 8 * table_k2.draws
        back = load_null_table(path)
        assert (back.k, back.draws, back.seed) == (2, table_k2.draws, 12)
        assert back.samples.tobytes() == table_k2.samples.tobytes()

    def test_save_is_byte_stable(self, tmp_path):
        t = build_null_table(4, 5000, seed=2 ** 63 + 5)
        save_null_table(t, tmp_path / "a")
        save_null_table(build_null_table(4, 5000, seed=2 ** 63 + 5, threads=3), tmp_path / "b")
        assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()

    def test_bad_magic(self, tmp_path, table_k1):
        path = tmp_path / "t"
        save_null_table(table_k1, path)
        raw = bytearray(path.read_bytes())
        raw[:8] = b"NOTATABL"
        path.write_bytes(bytes(raw))
        with pytest.raises(DataValidationError):
            load_null_table(path)

    def test_truncated(self, tmp_path, table_k1):
        path = tmp_path / "t"
        save_null_table(table_k1, path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(DataValidationError):
            load_null_table(path)
        path.write_bytes(b"AWN")
        with pytest.raises(DataValidationError):
            load_null_table(path)


class TestWithinBounds:
    def test_inside_and_clear_violations(self):
        ok = within_bounds([0.02, 0.001, 0.5], [0.01, 0.01, 0.01], [0.03, 0.03, 0.03], 10**6)
        assert ok.tolist() == [True, False, False]

    def test_error_evaluated_at_bound(self):
        # 30 tail hits where 49.4 are expected: 2.76 SE at the bound, 3.3 at the estimate
        lower, n = 4.939160179835931e-05, 10**6
        p_mc = 31 / (n + 1)
        assert within_bounds(p_mc, lower, lower, n)
        assert not within_bounds(p_mc, lower, lower, n, nse=2.5)

    def test_zero_width_upper_at_one(self):
        assert within_bounds(1.0, 1.0, 1.0, 1000)

    def test_empty_tail_not_flagged(self):
        # L far below 1/N: no tail hits is the expected outcome
        n = 10**6
        assert within_bounds(1 / (n + 1), 1e-10, 6e-8, n)
