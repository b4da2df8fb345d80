"""Self-contained nonparametric statistics.

Rank correlation, rank-based group tests, chance-corrected inter-rater
agreement, Gaussian kernel density for violin exports, and sample skewness.
Everything here is a pure function of its arguments.
"""

from __future__ import annotations

import math
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.stats import chi2, norm

# Exact Mann-Whitney enumeration is used up to this smaller-group size;
# beyond it (or with ties) the normal approximation takes over.
EXACT_CUTOFF = 8


class DegenerateInputError(ValueError):
    """Input has no variation where the statistic requires some."""


def midranks(values: Sequence[float]) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    v = np.asarray(values, dtype=float)
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of mid-ranks."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) != len(y):
        raise ValueError("spearman needs equal-length vectors")
    if len(x) < 2:
        raise ValueError("spearman needs at least 2 observations")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInputError("spearman undefined for constant input")
    rx = midranks(x)
    ry = midranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    return float(np.dot(rx, ry) / math.sqrt(np.dot(rx, rx) * np.dot(ry, ry)))


def _tie_term(all_values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(all_values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def kruskal_wallis(
    groups: Sequence[Sequence[float]], *, min_groups: int = 3
) -> tuple[float, float]:
    """Kruskal-Wallis H with tie correction and chi-square p-value.

    ``min_groups`` exists so tests can exercise the 2-group case against
    the rank-sum test; analyses should leave it at 3.
    """
    if len(groups) < min_groups:
        raise ValueError(f"kruskal_wallis needs at least {min_groups} groups")
    if any(len(g) == 0 for g in groups):
        raise ValueError("kruskal_wallis groups must be nonempty")
    pooled = np.concatenate([np.asarray(g, dtype=float) for g in groups])
    n = len(pooled)
    ranks = midranks(pooled)
    h = 0.0
    start = 0
    for g in groups:
        r = ranks[start : start + len(g)]
        start += len(g)
        h += len(g) * (r.mean() - (n + 1) / 2.0) ** 2
    h *= 12.0 / (n * (n + 1))
    tie = _tie_term(pooled)
    correction = 1.0 - tie / (n**3 - n) if n > 1 else 1.0
    if correction > 0:
        h /= correction
    df = len(groups) - 1
    p = float(chi2.sf(h, df)) if h > 0 else 1.0
    return float(h), p


def _exact_u_tail_counts(n_small: int, n_large: int) -> list[int]:
    """Count rank subsets per U value: ways[u] over all C(n_a+n_b, n_a) splits.

    Counts subsets of {1..N} of size n_small by rank sum, shifted to U.
    """
    n = n_small + n_large
    max_u = n_small * n_large
    # ways[k][u] = number of k-subsets with U value u, built by scanning ranks
    ways = [[0] * (max_u + 1) for _ in range(n_small + 1)]
    ways[0][0] = 1
    for rank in range(1, n + 1):
        for k in range(min(rank, n_small), 0, -1):
            # picking `rank` as the k-th smallest adds (rank - k) to U
            add = rank - k
            row, prev = ways[k], ways[k - 1]
            for u in range(max_u, add - 1, -1):
                if prev[u - add]:
                    row[u] += prev[u - add]
    return ways[n_small]


def wilcoxon_rank_sum(
    a: Sequence[float], b: Sequence[float], *, exact_cutoff: int = EXACT_CUTOFF
) -> tuple[float, float]:
    """Two-sided Mann-Whitney U test.

    Exact enumeration when the smaller group has at most ``exact_cutoff``
    observations and there are no ties; normal approximation with tie and
    continuity correction otherwise.  Returns (U of the first sample, p).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) == 0 or len(b) == 0:
        raise ValueError("wilcoxon_rank_sum needs nonempty samples")
    pooled = np.concatenate([a, b])
    ranks = midranks(pooled)
    w_a = float(ranks[: len(a)].sum())
    u_a = w_a - len(a) * (len(a) + 1) / 2.0
    n_a, n_b = len(a), len(b)
    has_ties = len(np.unique(pooled)) < len(pooled)

    if not has_ties and min(n_a, n_b) <= exact_cutoff:
        small, large = (n_a, n_b) if n_a <= n_b else (n_b, n_a)
        u_small = u_a if n_a <= n_b else n_a * n_b - u_a
        counts = _exact_u_tail_counts(small, large)
        total = sum(counts)
        u_int = int(round(u_small))
        lower = sum(counts[: u_int + 1])
        upper = sum(counts[u_int:])
        p = min(1.0, 2.0 * min(lower, upper) / total)
        return u_a, p

    mu = n_a * n_b / 2.0
    tie = _tie_term(pooled)
    n = n_a + n_b
    sigma2 = n_a * n_b / 12.0 * ((n + 1) - tie / (n * (n - 1)))
    if sigma2 <= 0:
        return u_a, 1.0
    z = (abs(u_a - mu) - 0.5) / math.sqrt(sigma2)
    z = max(z, 0.0)
    return u_a, float(2.0 * norm.sf(z))


def krippendorff_alpha(ratings: Sequence[Sequence[object]]) -> float:
    """Krippendorff's alpha for nominal data, coincidence-matrix form.

    ``ratings`` is rater-major: one row per rater, one column per item,
    ``None`` marking a missing rating.  Items rated by fewer than two
    raters are excluded.
    """
    n_raters = len(ratings)
    if n_raters == 0:
        raise ValueError("no ratings")
    n_items = len(ratings[0])
    if any(len(row) != n_items for row in ratings):
        raise ValueError("ragged rating matrix")

    units: list[list[object]] = []
    for item in range(n_items):
        vals = [ratings[r][item] for r in range(n_raters) if ratings[r][item] is not None]
        if len(vals) > 1:
            units.append(vals)
    if not units:
        raise DegenerateInputError("no item carries two or more ratings")

    categories = sorted({v for unit in units for v in unit}, key=repr)
    index = {c: i for i, c in enumerate(categories)}
    k = len(categories)
    coincidence = np.zeros((k, k))
    for unit in units:
        m = len(unit)
        for v1, v2 in combinations(unit, 2):
            coincidence[index[v1], index[v2]] += 1.0 / (m - 1)
            coincidence[index[v2], index[v1]] += 1.0 / (m - 1)

    n = coincidence.sum()
    n_c = coincidence.sum(axis=1)
    d_o = (n - np.trace(coincidence)) / n
    d_e = (n * n - np.dot(n_c, n_c)) / (n * (n - 1))
    if d_o == 0:
        return 1.0
    if d_e == 0:
        raise DegenerateInputError("expected disagreement is zero")
    return float(1.0 - d_o / d_e)


def kernel_density(values: Sequence[float], grid: Sequence[float]) -> np.ndarray:
    """Gaussian kernel density with Silverman's bandwidth on a fixed grid."""
    v = np.asarray(values, dtype=float)
    g = np.asarray(grid, dtype=float)
    if len(v) < 2:
        raise ValueError("kernel_density needs at least 2 values")
    sd = float(v.std(ddof=1))
    if sd == 0:
        raise DegenerateInputError("constant sample has a degenerate spike density")
    iqr = float(np.percentile(v, 75) - np.percentile(v, 25))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * spread * len(v) ** (-0.2)
    z = (g[:, None] - v[None, :]) / h
    dens = np.exp(-0.5 * z * z).sum(axis=1) / (len(v) * h * math.sqrt(2 * math.pi))
    return dens


def skewness(values: Sequence[float]) -> float:
    """Sample skewness g1 = m3 / m2^(3/2) with biased central moments."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        raise ValueError("skewness needs at least 3 values")
    d = v - v.mean()
    m2 = float(np.mean(d**2))
    if m2 == 0:
        raise DegenerateInputError("skewness undefined for zero variance")
    m3 = float(np.mean(d**3))
    return m3 / m2**1.5
