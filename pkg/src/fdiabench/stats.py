"""Nonparametric test battery: Friedman, Nemenyi, Wilcoxon signed-rank, Kruskal-Wallis."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2, norm, rankdata, studentized_range

ALPHA = 0.05
NEMENYI_ALPHA = 0.0026
EXACT_WILCOXON_MAX_N = 12


@dataclass(frozen=True)
class TestReport:
    __test__ = False  # keep pytest from collecting this as a test class

    method: str
    statistic: float | None
    p_value: float
    n: int
    effect_size: float | None = None
    effect_name: str | None = None
    alpha_adjusted: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} outside [0, 1]")

    @property
    def significant(self) -> bool:
        return self.p_value < (self.alpha_adjusted or ALPHA)


def normal_cdf(x):
    return norm.cdf(x)


def chi2_cdf(x, dof):
    return chi2.cdf(x, dof)


def friedman_test(matrix) -> TestReport:
    """Rows are models (k), columns are runs (N). Ranks are taken within each run, ties averaged."""
    A = np.asarray(matrix, dtype=float)
    k, N = A.shape
    if k < 2 or N < 1:
        raise ValueError("need at least 2 models and 1 run")
    ranks = np.apply_along_axis(rankdata, 0, A)
    rbar = ranks.mean(axis=1)
    stat = 12.0 * N / (k * (k + 1)) * float(np.sum((rbar - (k + 1) / 2.0) ** 2))
    return TestReport("friedman", stat, float(chi2.sf(stat, k - 1)), N)


def friedman_rank_means(matrix) -> np.ndarray:
    return np.apply_along_axis(rankdata, 0, np.asarray(matrix, dtype=float)).mean(axis=1)


def nemenyi_critical_difference(k: int, N: int, alpha: float = NEMENYI_ALPHA) -> float:
    q = studentized_range.ppf(1.0 - alpha, k, np.inf)
    return float(q / math.sqrt(2.0) * math.sqrt(k * (k + 1) / (6.0 * N)))


def nemenyi_posthoc(rank_means, k: int, N: int, alpha_adj: float = NEMENYI_ALPHA) -> np.ndarray:
    """Boolean k x k matrix: True where |R_i - R_j| exceeds the critical difference."""
    r = np.asarray(rank_means, dtype=float)
    if len(r) != k:
        raise ValueError("rank_means must have k entries")
    diff = np.abs(r[:, None] - r[None, :])
    return diff > nemenyi_critical_difference(k, N, alpha_adj)


def _signed_rank_parts(a, b):
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    nz = d[d != 0]
    ranks = rankdata(np.abs(nz))
    return d, nz, ranks


def cohens_d_paired(a, b) -> float | None:
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    if len(d) < 2:
        return None
    sd = d.std(ddof=1)
    if sd == 0:
        return None if d.mean() == 0 else math.copysign(math.inf, d.mean())
    return float(d.mean() / sd)


def wilcoxon_exact_p(ranks: np.ndarray, w_plus: float) -> float:
    """Two-sided p by enumerating every sign assignment of the given ranks."""
    n = len(ranks)
    signs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    dist = signs @ ranks
    centre = n * (n + 1) / 4.0
    return float(np.mean(np.abs(dist - centre) >= abs(w_plus - centre) - 1e-9))


def wilcoxon_signed_rank(a, b) -> TestReport:
    """Statistic is W+ (sum of ranks of positive differences); zero differences are dropped."""
    d, nz, ranks = _signed_rank_parts(a, b)
    n = len(nz)
    effect = cohens_d_paired(a, b)
    if n == 0:
        return TestReport("wilcoxon", None, 1.0, 0, effect, "cohens_d")
    w_plus = float(ranks[nz > 0].sum())
    if n <= EXACT_WILCOXON_MAX_N:
        p = wilcoxon_exact_p(ranks, w_plus)
        method = "wilcoxon_exact"
    else:
        _, counts = np.unique(ranks, return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - np.sum(counts**3 - counts) / 48.0
        z = (w_plus - n * (n + 1) / 4.0) / math.sqrt(var)
        p = float(2.0 * norm.sf(abs(z)))
        method = "wilcoxon_normal"
    return TestReport(method, w_plus, min(1.0, p), n, effect, "cohens_d")


def eta_squared(H: float, G: int, N: int) -> float | None:
    """(H - G + 1) / (N - G); undefined (None) when every group has a single observation."""
    return (H - G + 1.0) / (N - G) if N > G else None


def kruskal_wallis(groups) -> TestReport:
    """H statistic with the usual tie correction, p from chi2(G - 1), effect size eta^2."""
    groups = [np.asarray(g, dtype=float).ravel() for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise ValueError("need at least two non-empty groups")
    pooled = np.concatenate(groups)
    N, G = len(pooled), len(groups)
    ranks = rankdata(pooled)
    H, start = 0.0, 0
    for g in groups:
        H += ranks[start : start + len(g)].sum() ** 2 / len(g)
        start += len(g)
    H = 12.0 / (N * (N + 1)) * H - 3.0 * (N + 1)
    _, counts = np.unique(pooled, return_counts=True)
    tie = 1.0 - np.sum(counts**3 - counts) / (N**3 - N)
    if tie <= 0:
        return TestReport("kruskal_wallis", 0.0, 1.0, N, eta_squared(0.0, G, N), "eta_squared")
    H = float(max(0.0, H / tie))
    return TestReport("kruskal_wallis", H, float(chi2.sf(H, G - 1)), N, eta_squared(H, G, N), "eta_squared")
