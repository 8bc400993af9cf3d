"""Normality screening and two-sample significance tests for paired metrics.

The default decision rule follows the comparison protocol: Shapiro-Wilk at
alpha=0.05 on both samples; normal pairs get a pooled two-sample t-test,
anything else a Wilcoxon signed-rank test on the paired differences.  The
signed-rank p-value is exact (integer-count distribution over all sign
assignments) up to n=25 and a continuity-corrected normal approximation
above.  pairing="paired" swaps the t branch for a paired t-test and
pairing="unpaired" swaps the Wilcoxon branch for a rank-sum test.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as _scipy_stats

ALPHA = 0.05


class InsufficientDataError(ValueError):
    pass


@dataclass(frozen=True)
class TestResult:
    comparison: str
    test_used: str  # students_t | wilcoxon
    statistic: float
    p_value: float
    n: int
    significant_at_005: bool


def normality_check(samples, *, alpha: float = ALPHA) -> tuple[bool, float]:
    """Shapiro-Wilk screen; returns (looks_normal, W).

    Degenerate constant samples report (False, 0.0) by convention.  Fewer
    than 8 observations raise InsufficientDataError.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 8:
        raise InsufficientDataError(f"normality check needs n >= 8, got {len(samples)}")
    if np.ptp(samples) == 0.0:
        return False, 0.0
    w, p = _scipy_stats.shapiro(samples)
    return bool(p >= alpha), float(w)


def _signed_rank_exact_p(ranks2: np.ndarray, w2_plus: int, n: int) -> float:
    """Two-sided exact p over all 2^n sign assignments (integer counts).

    ranks2 are the doubled midranks (integers); w2_plus the doubled positive
    rank sum.  p = min(1, 2 * min(P(W+ <= w), P(W+ >= w))).
    """
    total = int(ranks2.sum())
    counts = [0] * (total + 1)
    counts[0] = 1
    for r in ranks2:
        r = int(r)
        for s in range(total - r, -1, -1):
            if counts[s]:
                counts[s + r] += counts[s]
    le = sum(counts[: w2_plus + 1])
    ge = sum(counts[w2_plus:])
    p = 2 * min(le, ge) / (1 << n)
    return min(1.0, p)


def wilcoxon_signed_rank(diffs) -> tuple[float, float, int]:
    """Signed-rank test on paired differences.

    Zero differences are dropped; |differences| are midranked.  Returns
    (statistic, two_sided_p, n_effective) with statistic = (W+ - W-)/2, which
    negates under a swap of the paired samples.  All differences zero gives
    the degenerate (0.0, 1.0, 0).
    """
    diffs = np.asarray(diffs, dtype=np.float64)
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n == 0:
        return 0.0, 1.0, 0
    ranks = _scipy_stats.rankdata(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    statistic = (w_plus - w_minus) / 2.0

    if n <= 25:
        ranks2 = np.rint(2 * ranks).astype(np.int64)
        w2_plus = int(round(2 * w_plus))
        return statistic, _signed_rank_exact_p(ranks2, w2_plus, n), n

    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(np.abs(diffs), return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0:
        return statistic, 1.0, n
    delta = w_plus - mu
    z = (delta - 0.5 * np.sign(delta)) / np.sqrt(var)  # continuity correction toward the mean
    p = float(2.0 * special.ndtr(-abs(z)))
    return statistic, min(1.0, p), n


def rank_sum(a, b) -> tuple[float, float]:
    """Two-sided Wilcoxon rank-sum (normal approximation, tie-corrected)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    combined = np.concatenate([a, b])
    ranks = _scipy_stats.rankdata(combined)
    w = float(ranks[:na].sum())
    n = na + nb
    mu = na * (n + 1) / 2.0
    _, tie_counts = np.unique(combined, return_counts=True)
    tie_term = float(((tie_counts**3 - tie_counts)).sum())
    var = na * nb / 12.0 * ((n + 1) - tie_term / (n * (n - 1)))
    statistic = w - mu
    if var <= 0:
        return statistic, 1.0
    delta = statistic
    z = (delta - 0.5 * np.sign(delta)) / np.sqrt(var)
    return statistic, min(1.0, float(2.0 * special.ndtr(-abs(z))))


def _t_sf(t: float, df: int) -> float:
    """P(T > t) for Student's t via the regularized incomplete beta."""
    return float(_scipy_stats.t.sf(t, df))


def student_t_two_sample(a, b) -> tuple[float, float]:
    """Pooled-variance equal-means t-test; returns (t, two_sided_p)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = len(a), len(b)
    va = a.var(ddof=1)
    vb = b.var(ddof=1)
    pooled = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
    diff = a.mean() - b.mean()
    if pooled == 0.0:
        return (0.0, 1.0) if diff == 0.0 else (float("inf") if diff > 0 else float("-inf"), 0.0)
    t = diff / np.sqrt(pooled * (1.0 / na + 1.0 / nb))
    return float(t), min(1.0, 2.0 * _t_sf(abs(t), na + nb - 2))


def student_t_paired(a, b) -> tuple[float, float]:
    """One-sample t-test on the paired differences."""
    d = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    n = len(d)
    sd = d.std(ddof=1)
    mean = d.mean()
    if sd == 0.0:
        return (0.0, 1.0) if mean == 0.0 else (float("inf") if mean > 0 else float("-inf"), 0.0)
    t = mean / (sd / np.sqrt(n))
    return float(t), min(1.0, 2.0 * _t_sf(abs(t), n - 1))


def compare(a, b, *, comparison: str = "", pairing: str = "default", alpha: float = ALPHA) -> TestResult:
    """Two-sample comparison of paired per-sample metric values.

    Both inputs must be paired by test sample (equal lengths, n >= 8).  When
    both pass the normality screen the t branch runs (pooled two-sample by
    default, paired with pairing="paired"); otherwise the Wilcoxon branch
    (signed-rank by default, rank-sum with pairing="unpaired").
    """
    if pairing not in ("default", "paired", "unpaired"):
        raise ValueError(f"pairing must be default/paired/unpaired, got {pairing!r}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if len(a) != len(b):
        raise ValueError("compare expects samples paired by test sample (equal lengths)")
    if len(a) < 8:
        raise InsufficientDataError(f"compare needs n >= 8 pairs, got {len(a)}")

    normal_a, _ = normality_check(a, alpha=alpha)
    normal_b, _ = normality_check(b, alpha=alpha)
    if normal_a and normal_b:
        if pairing == "paired":
            statistic, p = student_t_paired(a, b)
        else:
            statistic, p = student_t_two_sample(a, b)
        test_used = "students_t"
    else:
        if pairing == "unpaired":
            statistic, p = rank_sum(a, b)
        else:
            statistic, p, _ = wilcoxon_signed_rank(a - b)
        test_used = "wilcoxon"
    return TestResult(
        comparison=comparison,
        test_used=test_used,
        statistic=statistic,
        p_value=p,
        n=len(a),
        significant_at_005=bool(p < 0.05),
    )
