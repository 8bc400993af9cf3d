import math
from itertools import product

import numpy as np
import pytest
from scipy.stats import rankdata

from axom import stats
from axom.stats import (
    InsufficientDataError,
    compare,
    normality_check,
    rank_sum,
    student_t_paired,
    student_t_two_sample,
    wilcoxon_signed_rank,
)


def enumeration_p(diffs):
    """Independent 2^n enumeration of the signed-rank distribution."""
    diffs = np.asarray(diffs, dtype=np.float64)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        return 1.0
    ranks = rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    le = ge = 0
    for signs in product((1, -1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s > 0)
        if w <= w_plus + 1e-9:
            le += 1
        if w >= w_plus - 1e-9:
            ge += 1
    return min(1.0, 2 * min(le, ge) / 2**n)


class TestNormality:
    def test_normal_sample_passes(self):
        rng = np.random.default_rng(0)
        ok, w = normality_check(rng.standard_normal(200))
        assert ok
        assert 0.9 < w <= 1.0

    def test_exponential_sample_fails(self):
        rng = np.random.default_rng(1)
        ok, _ = normality_check(rng.exponential(size=200))
        assert not ok

    def test_constant_sample_degenerate(self):
        ok, w = normality_check(np.full(20, 3.3))
        assert not ok
        assert w == 0.0

    def test_small_sample_rejected(self):
        with pytest.raises(InsufficientDataError):
            normality_check([1.0, 2.0, 3.0])

    def test_shapiro_n3_closed_form(self):
        # for n=3 the W statistic is (x(3)-x(1))^2 / (2 * sum (x-mean)^2)
        from scipy.stats import shapiro

        x = np.array([1.0, 2.0, 10.0])
        ss = ((x - x.mean()) ** 2).sum()
        expected = (x.max() - x.min()) ** 2 / (2 * ss)
        w, _ = shapiro(x)
        assert w == pytest.approx(expected, abs=1e-3)


class TestWilcoxon:
    def test_all_positive_five(self):
        stat, p, n = wilcoxon_signed_rank([1, 2, 3, 4, 5])
        assert n == 5
        assert p == 1 / 16  # one-sided 1/32, doubled

    def test_exact_matches_enumeration(self):
        rng = np.random.default_rng(2)
        for _ in range(120):
            n = int(rng.integers(1, 13))
            diffs = np.round(rng.standard_normal(n), 1)  # rounding creates ties/zeros
            _, p, _ = wilcoxon_signed_rank(diffs)
            assert p == enumeration_p(diffs)

    def test_all_zero_degenerate(self):
        stat, p, n = wilcoxon_signed_rank(np.zeros(10))
        assert (stat, p, n) == (0.0, 1.0, 0)

    def test_statistic_negates_on_flip(self):
        rng = np.random.default_rng(3)
        d = rng.standard_normal(15)
        s1, p1, _ = wilcoxon_signed_rank(d)
        s2, p2, _ = wilcoxon_signed_rank(-d)
        assert s1 == -s2
        assert p1 == p2

    def test_approx_consistent_with_exact_at_boundary(self):
        # same tie-free data evaluated exactly (n=25) and as z-approximation
        rng = np.random.default_rng(4)
        base = rng.standard_normal(25) + 0.4
        _, p_exact, _ = wilcoxon_signed_rank(base)
        mu = 25 * 26 / 4
        ranks = rankdata(np.abs(base))
        w_plus = ranks[base > 0].sum()
        var = 25 * 26 * 51 / 24
        z = (w_plus - mu - 0.5 * np.sign(w_plus - mu)) / math.sqrt(var)
        from scipy.special import ndtr

        p_approx = 2 * ndtr(-abs(z))
        assert p_exact == pytest.approx(p_approx, rel=0.08)

    def test_large_sample_effect_detected(self):
        rng = np.random.default_rng(5)
        d = rng.standard_normal(60) + 0.8
        _, p, _ = wilcoxon_signed_rank(d)
        assert p < 0.001


class TestStudentT:
    def test_separated_means_significant(self):
        rng = np.random.default_rng(6)
        a = rng.normal(0.0, 1.0, 100)
        b = rng.normal(1.0, 1.0, 100)
        t, p = student_t_two_sample(a, b)
        assert p < 0.001

    def test_statistic_closed_form(self):
        rng = np.random.default_rng(7)
        a, b = rng.normal(0, 1, 40), rng.normal(0.3, 1.2, 40)
        t, _ = student_t_two_sample(a, b)
        sp2 = (39 * a.var(ddof=1) + 39 * b.var(ddof=1)) / 78
        expected = (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / 40 + 1 / 40))
        assert t == pytest.approx(expected, abs=1e-12)

    def test_identical_samples(self):
        a = np.arange(10, dtype=float)
        t, p = student_t_two_sample(a, a.copy())
        assert t == 0.0 and p == 1.0

    def test_paired_detects_consistent_shift(self):
        rng = np.random.default_rng(8)
        a = rng.normal(0, 1, 30)
        b = a - 0.2 + rng.normal(0, 0.05, 30)
        _, p_paired = student_t_paired(a, b)
        _, p_pooled = student_t_two_sample(a, b)
        assert p_paired < 0.001 < p_pooled  # pairing removes the shared variance

    def test_t_cdf_accuracy_vs_mpmath(self):
        import mpmath

        from scipy.stats import t as t_dist

        for t_val, df in ((0.5, 3), (1.96, 10), (2.7, 25), (-1.3, 7), (4.2, 99)):
            x = mpmath.mpf(t_val)
            ref = mpmath.quad(
                lambda u: (1 + u**2 / df) ** (-(df + 1) / 2), [x, mpmath.inf]
            ) * mpmath.gamma((df + 1) / 2) / (mpmath.sqrt(df * mpmath.pi) * mpmath.gamma(df / 2))
            assert abs(t_dist.sf(t_val, df) - float(ref)) < 1e-10

    def test_normal_cdf_accuracy_vs_mpmath(self):
        import mpmath

        from scipy.special import ndtr

        for z in (-3.5, -1.0, 0.0, 0.7, 2.8):
            ref = float(mpmath.ncdf(z))
            assert abs(ndtr(z) - ref) < 1e-12


class TestCompare:
    def test_identical_lists_p_one(self):
        a = np.linspace(0, 1, 20)
        result = compare(a, a.copy())
        assert result.p_value == 1.0
        assert not result.significant_at_005

    def test_normal_pair_uses_t(self):
        rng = np.random.default_rng(0)  # a seed whose draws pass the normality screen
        a = rng.normal(0, 1, 100)
        b = rng.normal(0.1, 1, 100)
        result = compare(a, b)
        assert result.test_used == "students_t"

    def test_non_normal_pair_uses_wilcoxon(self):
        rng = np.random.default_rng(10)
        a = rng.exponential(size=60)
        b = a * 1.1 + rng.exponential(size=60) * 0.05
        result = compare(a, b)
        assert result.test_used == "wilcoxon"

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        for maker in (lambda: rng.exponential(size=40), lambda: rng.normal(0, 1, 40)):
            a, b = maker(), maker()
            r1, r2 = compare(a, b), compare(b, a)
            assert r1.p_value == pytest.approx(r2.p_value, abs=1e-12)
            assert r1.statistic == pytest.approx(-r2.statistic, abs=1e-12)
            assert r1.test_used == r2.test_used

    def test_unpaired_mode_rank_sum(self):
        rng = np.random.default_rng(12)
        a = rng.exponential(size=50)
        b = rng.exponential(size=50) + 1.0
        result = compare(a, b, pairing="unpaired")
        assert result.test_used == "wilcoxon"
        assert result.p_value < 0.01
        direct_stat, direct_p = rank_sum(a, b)
        assert result.p_value == direct_p and result.statistic == direct_stat

    def test_paired_mode_uses_paired_t(self):
        rng = np.random.default_rng(13)
        a = rng.normal(0, 1, 50)
        b = a - 0.15 + rng.normal(0, 0.05, 50)
        default = compare(a, b)
        paired = compare(a, b, pairing="paired")
        assert paired.test_used == "students_t"
        assert paired.p_value < default.p_value

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            compare(np.zeros(10), np.zeros(11))

    def test_too_short(self):
        with pytest.raises(InsufficientDataError):
            compare(np.zeros(5), np.ones(5))

    def test_significance_flag_matches_threshold(self):
        rng = np.random.default_rng(14)
        a = rng.normal(0, 1, 50)
        b = rng.normal(2, 1, 50)
        result = compare(a, b)
        assert result.significant_at_005 == (result.p_value < 0.05)
        assert isinstance(result, stats.TestResult)
