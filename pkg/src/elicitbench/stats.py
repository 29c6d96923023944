"""Nonparametric significance tests used by the report stage.

All tests rank with midranks. Zero differences are dropped for the paired
tests. Tail probabilities use the regularized incomplete gamma function
(chi-square), the complementary error function (normal), and the Student-t
CDF; each result carries a method note naming the approximation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaincc, stdtr

from .errors import InputError, InsufficientDataError

EXACT_WILCOXON_MAX_N = 12


@dataclass(frozen=True)
class TestResult:
    statistic: float
    p_value: float
    n: object  # int, or tuple of group sizes
    method_note: str


def chi2_sf(x: float, df: int) -> float:
    """Chi-square survival function via the regularized upper incomplete gamma."""
    if x < 0:
        return 1.0
    return float(gammaincc(df / 2.0, x / 2.0))


def normal_sf(z: float) -> float:
    """Standard normal upper tail via erfc."""
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def t_sf(t: float, df: int) -> float:
    """Student-t upper tail."""
    return float(stdtr(df, -t))


def midranks(values: Sequence[float]) -> np.ndarray:
    """Ranks 1..n with tied values sharing the average of their positions."""
    a = np.asarray(values, dtype=float)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=float)
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and a[order[j + 1]] == a[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _tie_counts(values: np.ndarray) -> list[int]:
    _, counts = np.unique(values, return_counts=True)
    return [int(c) for c in counts if c > 1]


def kruskal_wallis(groups: Sequence[Sequence[float]]) -> TestResult:
    """Kruskal-Wallis H with tie correction; p from chi-square with k-1 df."""
    if len(groups) < 2:
        raise InputError("Kruskal-Wallis needs at least two groups")
    sizes = [len(g) for g in groups]
    if any(s < 1 for s in sizes):
        raise InputError("every group must be non-empty")
    total = sum(sizes)
    if total < 3:
        raise InputError("Kruskal-Wallis needs at least 3 observations in total")
    pooled = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    note = "chi-square approximation (k-1 df), midrank ties, tie-corrected"
    ties = _tie_counts(pooled)
    correction = 1.0 - sum(t**3 - t for t in ties) / (total**3 - total)
    if correction == 0.0:  # every observation identical: no separation
        return TestResult(0.0, 1.0, tuple(sizes), note)
    ranks = midranks(pooled)
    h = 0.0
    start = 0
    for size in sizes:
        rank_sum = float(np.sum(ranks[start : start + size]))
        h += rank_sum * rank_sum / size
        start += size
    h = 12.0 / (total * (total + 1)) * h - 3.0 * (total + 1)
    h /= correction
    return TestResult(float(h), min(1.0, chi2_sf(h, len(groups) - 1)), tuple(sizes), note)


def _wilcoxon_rank_sums(diffs: np.ndarray) -> tuple[float, float, np.ndarray]:
    ranks = midranks(np.abs(diffs))
    w_plus = float(np.sum(ranks[diffs > 0]))
    w_minus = float(np.sum(ranks[diffs < 0]))
    return w_plus, w_minus, ranks


def _wilcoxon_exact_p(ranks: np.ndarray, w: float) -> float:
    """P(W+ <= w) doubled, over all 2^n equiprobable sign assignments."""
    n = len(ranks)
    count = 0
    for mask in range(1 << n):
        total = 0.0
        for i in range(n):
            if mask >> i & 1:
                total += ranks[i]
        if total <= w + 1e-12:
            count += 1
    return min(1.0, 2.0 * count / (1 << n))


def wilcoxon_signed_rank(differences: Sequence[float]) -> TestResult:
    """Two-sided Wilcoxon signed-rank test on paired differences.

    Zeros are dropped. Exact enumeration for n <= 12; otherwise a normal
    approximation with continuity correction and tie-adjusted variance. The
    statistic is the smaller of the signed rank sums.
    """
    if len(differences) == 0:
        raise InputError("Wilcoxon needs at least one difference")
    diffs = np.asarray([d for d in differences if d != 0.0], dtype=float)
    n = len(diffs)
    if n == 0:
        return TestResult(0.0, 1.0, 0, "all differences zero")
    w_plus, w_minus, ranks = _wilcoxon_rank_sums(diffs)
    w = min(w_plus, w_minus)
    if n <= EXACT_WILCOXON_MAX_N:
        return TestResult(w, _wilcoxon_exact_p(ranks, w), n,
                          f"exact enumeration of sign assignments (n <= {EXACT_WILCOXON_MAX_N})")
    mean = n * (n + 1) / 4.0
    tie_term = sum(t**3 - t for t in _tie_counts(np.abs(diffs))) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0.0:
        return TestResult(w, 1.0, n, "degenerate variance (all |d| tied to zero spread)")
    z = (w - mean + 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * (1.0 - normal_sf(z)) if z > 0 else 2.0 * normal_sf(-z))
    return TestResult(w, p, n,
                      "normal approximation, continuity correction, tie-adjusted variance")


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom == 0.0:
        raise InputError("correlation undefined for constant input")
    return float(np.dot(xc, yc) / denom)


def spearman(x: Sequence[float], y: Sequence[float]) -> TestResult:
    """Spearman rank correlation; p from the t approximation with n-2 df."""
    if len(x) != len(y):
        raise InputError("x and y must have equal length")
    n = len(x)
    if n < 3:
        raise InputError("Spearman needs at least 3 pairs")
    rho = _pearson(midranks(x), midranks(y))
    rho = max(-1.0, min(1.0, rho))
    note = "t approximation (n-2 df) on midranks"
    if abs(rho) == 1.0:
        return TestResult(rho, 0.0, n, note)
    t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
    return TestResult(rho, min(1.0, 2.0 * t_sf(abs(t), n - 2)), n, note)


def bonferroni(p_values: Sequence[float], m: int) -> list[float]:
    """Family-wise correction: min(1, m * p) elementwise."""
    if m < len(p_values) or m < 1:
        raise InputError(f"m={m} smaller than the number of comparisons")
    return [min(1.0, m * p) for p in p_values]


def rank_biserial(differences: Sequence[float]) -> float:
    """Paired effect size: (favorable - unfavorable rank sum) / total rank sum."""
    diffs = np.asarray([d for d in differences if d != 0.0], dtype=float)
    if len(diffs) == 0:
        raise InsufficientDataError("rank-biserial undefined for all-zero differences")
    w_plus, w_minus, ranks = _wilcoxon_rank_sums(diffs)
    return (w_plus - w_minus) / float(np.sum(ranks))
