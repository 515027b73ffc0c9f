"""Two-sided Wilcoxon rank-sum (Mann-Whitney U) test"""
import logging
import math
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
from scipy import stats as scipy_stats

from ..exceptions import DomainError

logger = logging.getLogger(__name__)

EXACT_MAX_COMBINED = 20
EXPANSION_CAP = 1_000_000
SMALLEST_P = np.finfo(float).tiny


class TestMethod(str, Enum):
    EXACT = "exact"
    NORMAL_APPROX = "normal_approx"


@dataclass(frozen=True)
class RankSumResult:
    u: float
    w: float
    z: Optional[float]
    p_two_sided: float
    method: TestMethod
    n1: int
    n2: int

    def to_dict(self):
        return {
            "U": self.u,
            "W": self.w,
            "z": self.z,
            "p": self.p_two_sided,
            "method": self.method.value,
            "n1": self.n1,
            "n2": self.n2,
        }


def _finite_sample(values, name):
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.size == 0:
        raise DomainError(f"{name} is empty")
    if not np.all(np.isfinite(array)):
        raise DomainError(f"{name} contains non-finite values")
    return array


def rank_with_ties(values):
    """1-based ranks, tied values sharing the mean of the positions they occupy"""
    return scipy_stats.rankdata(_finite_sample(values, "values"), method="average")


@lru_cache(maxsize=None)
def _u_counts(n1, n2):
    """Number of orderings of n1 + n2 distinct values giving each U = 0..n1*n2.

    Conditioning on which sample holds the largest value: if it belongs to the
    first sample it beats all n2 values of the second.
    """
    table = {}
    for i in range(n1 + 1):
        for j in range(n2 + 1):
            if i == 0 or j == 0:
                table[i, j] = (1,)
                continue
            with_largest_first = (0,) * j + table[i - 1, j]
            with_largest_second = table[i, j - 1]
            size = i * j + 1
            table[i, j] = tuple(
                (with_largest_first[u] if u < len(with_largest_first) else 0)
                + (with_largest_second[u] if u < len(with_largest_second) else 0)
                for u in range(size)
            )
    return table[n1, n2]


def exact_p_value(u, n1, n2):
    counts = _u_counts(n1, n2)
    total = math.comb(n1 + n2, n1)
    u = int(round(u))
    lower = sum(counts[: u + 1])
    upper = sum(counts[u:])
    return min(1.0, 2 * min(lower, upper) / total)


def _normal_approx(u, n1, n2, tie_term):
    n = n1 + n2
    mean = n1 * n2 / 2.0
    variance = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1))) if n > 1 else 0.0
    if variance <= 0:
        return 0.0, 1.0
    sd = math.sqrt(variance)
    z = (abs(u - mean) - 0.5) / sd
    p = min(1.0, 2 * scipy_stats.norm.sf(z))
    return (u - mean) / sd, max(p, SMALLEST_P)


def _tie_term(counts):
    counts = np.asarray(counts, dtype=float)
    return float(np.sum(counts**3 - counts))


def ranksum_test(sample_a, sample_b, force_approx=False):
    """Exact U distribution for small tie-free samples, otherwise tie-corrected normal approximation"""
    a = _finite_sample(sample_a, "sample_a")
    b = _finite_sample(sample_b, "sample_b")
    n1, n2 = a.size, b.size
    ranks = rank_with_ties(np.concatenate([a, b]))
    w = float(ranks[:n1].sum())
    u = w - n1 * (n1 + 1) / 2.0

    _, tie_counts = np.unique(np.concatenate([a, b]), return_counts=True)
    has_ties = bool(np.any(tie_counts > 1))
    if n1 + n2 <= EXACT_MAX_COMBINED and not has_ties and not force_approx:
        return RankSumResult(u, w, None, exact_p_value(u, n1, n2), TestMethod.EXACT, n1, n2)

    z, p = _normal_approx(u, n1, n2, _tie_term(tie_counts))
    return RankSumResult(u, w, z, p, TestMethod.NORMAL_APPROX, n1, n2)


def _normal_from_counts(values_a, weights_a, values_b, weights_b):
    values = np.concatenate([values_a, values_b])
    owner_a = np.concatenate([weights_a, np.zeros_like(weights_b)])
    totals = np.concatenate([weights_a, weights_b])
    unique, inverse = np.unique(values, return_inverse=True)
    per_value = np.bincount(inverse, weights=totals)
    per_value_a = np.bincount(inverse, weights=owner_a)
    upper = np.cumsum(per_value)
    midranks = upper - (per_value - 1) / 2.0
    n1, n2 = int(weights_a.sum()), int(weights_b.sum())
    w = float(np.sum(per_value_a * midranks))
    u = w - n1 * (n1 + 1) / 2.0
    z, p = _normal_approx(u, n1, n2, _tie_term(per_value))
    return RankSumResult(u, w, z, p, TestMethod.NORMAL_APPROX, n1, n2)


def weighted_ranksum_test(sample_a, weights_a, sample_b, weights_b, expansion_cap=EXPANSION_CAP):
    """Rank-sum test on points standing for `weight` identical trip speeds each.

    Up to expansion_cap values the samples are expanded and tested as usual;
    above it the approximate statistic is computed from value counts.
    """
    a = _finite_sample(sample_a, "sample_a")
    b = _finite_sample(sample_b, "sample_b")
    wa = np.asarray(weights_a, dtype=float).reshape(-1)
    wb = np.asarray(weights_b, dtype=float).reshape(-1)
    if wa.shape != a.shape or wb.shape != b.shape:
        raise DomainError("Weights must match their samples")
    if np.any(wa < 1) or np.any(wb < 1) or np.any(wa % 1) or np.any(wb % 1):
        raise DomainError("Weights must be positive whole trip counts")

    total = int(wa.sum() + wb.sum())
    if total <= expansion_cap:
        return ranksum_test(np.repeat(a, wa.astype(int)), np.repeat(b, wb.astype(int)))

    logger.warning(f"{total} expanded values exceed the cap of {expansion_cap}; using the normal approximation")
    return _normal_from_counts(a, wa, b, wb)
