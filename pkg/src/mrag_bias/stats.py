"""Significance tests and correlation used in the bias analysis.

All tail probabilities come from :mod:`mrag_bias.special`; nothing here
depends on scipy, which the test-suite uses as an independent reference.
"""

import logging
import math
from typing import NamedTuple

import numpy as np

from mrag_bias._validation import check_paired
from mrag_bias.exceptions import NotApplicableError
from mrag_bias.special import chi2_sf, student_t_two_sided

logger = logging.getLogger(__name__)

__all__ = [
    "KruskalResult",
    "PeerResult",
    "TTestResult",
    "PearsonResult",
    "rank_with_ties",
    "kruskal_wallis",
    "peer",
    "paired_t_test",
    "pearson",
    "significance_stars",
]

P_FLOOR = 1e-300


class KruskalResult(NamedTuple):
    H: float
    df: int
    p: float


class PeerResult(NamedTuple):
    value: float
    n_evaluable: int


class TTestResult(NamedTuple):
    t: float
    df: int
    p: float
    mean_delta: float
    degenerate: bool = False


class PearsonResult(NamedTuple):
    r: float
    p: float


def _floor(p):
    return 0.0 if p < P_FLOOR else min(1.0, p)


def rank_with_ties(values):
    """1-based ranks with tied values sharing their mid-rank."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    n = values.size
    while i < n:
        j = i
        while j + 1 < n and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def kruskal_wallis(groups):
    """Kruskal-Wallis H test with mid-ranks and the tie-correction divisor.

    Empty groups are ignored. The p-value is the chi-square approximation at
    ``len(groups) - 1`` degrees of freedom regardless of group sizes.

    Raises:
        NotApplicableError: fewer than two non-empty groups or fewer than
            three observations in total.
    """
    groups = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    groups = [g for g in groups if g.size]
    if len(groups) < 2:
        raise NotApplicableError("Kruskal-Wallis needs at least two non-empty groups")
    sizes = np.array([g.size for g in groups])
    n = int(sizes.sum())
    if n < 3:
        raise NotApplicableError(f"Kruskal-Wallis needs at least 3 observations, got {n}")
    df = len(groups) - 1

    pooled = np.concatenate(groups)
    ranks = rank_with_ties(pooled)
    _, tie_counts = np.unique(pooled, return_counts=True)
    correction = 1.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / (n ** 3 - n)
    if correction <= 0.0:
        # every observation identical: no rank separation at all
        return KruskalResult(0.0, df, 1.0)

    bounds = np.cumsum(sizes)[:-1]
    rank_sums = np.array([r.sum() for r in np.split(ranks, bounds)])
    h = 12.0 / (n * (n + 1)) * float(np.sum(rank_sums ** 2 / sizes)) - 3.0 * (n + 1)
    h = max(h, 0.0) / correction
    return KruskalResult(h, df, _floor(chi2_sf(h, df)))


def peer(records):
    """Mean per-query Kruskal-Wallis p-value over language rank groups.

    Args:
        records: iterable of ``RankGroups``-shaped items. Each item is either
            an object with a ``groups`` attribute or a plain mapping from
            language to the rank positions of that query's positive documents.

    Returns:
        PeerResult with the mean p-value and the number of queries that
        satisfied the test's preconditions.

    Raises:
        NotApplicableError: no query was evaluable.
    """
    pvalues = []
    for rec in records:
        groups = getattr(rec, "groups", rec)
        try:
            pvalues.append(kruskal_wallis(list(groups.values())).p)
        except NotApplicableError as exc:
            logger.debug("PEER skips %s: %s", getattr(rec, "query_id", "<query>"), exc)
    if not pvalues:
        raise NotApplicableError("PEER: no query has positives in two or more languages")
    return PeerResult(float(np.mean(pvalues)), len(pvalues))


def paired_t_test(a, b):
    """Two-tailed paired t-test on ``a - b``.

    A zero-variance difference vector is degenerate: all-zero differences
    give ``t = 0, p = 1``; a non-zero constant shift gives ``t = +/-inf,
    p = 0`` with ``degenerate=True``.
    """
    a, b = check_paired(a, b)
    d = a - b
    n = d.size
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    df = n - 1
    if sd == 0.0:
        if mean == 0.0:
            return TTestResult(0.0, df, 1.0, 0.0, True)
        return TTestResult(math.copysign(math.inf, mean), df, 0.0, mean, True)
    t = mean / (sd / math.sqrt(n))
    return TTestResult(t, df, _floor(student_t_two_sided(t, df)), mean)


def pearson(x, y):
    """Sample Pearson correlation with a two-tailed t-based p-value.

    Raises:
        NotApplicableError: either input has zero variance.
    """
    x, y = check_paired(x, y, min_len=3)
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(np.dot(xc, xc))
    syy = float(np.dot(yc, yc))
    if sxx == 0.0 or syy == 0.0:
        raise NotApplicableError("Pearson correlation is undefined for a constant input")
    r = float(np.dot(xc, yc)) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    n = x.size
    if abs(r) == 1.0:
        return PearsonResult(r, 0.0)
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return PearsonResult(r, _floor(student_t_two_sided(t, n - 2)))


def significance_stars(p):
    if p < 0.001:
        return "***"
    if p < 0.01:
        return "**"
    if p < 0.05:
        return "*"
    return ""
