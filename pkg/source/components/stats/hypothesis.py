import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy.special import gammaincc
from scipy.stats import norm, rankdata

log = logging.getLogger(__name__)

# Exact Mann-Whitney distribution when the smaller sample has at most this many values ...
EXACT_MAX_SMALLER = 8
# ... and the pooled sample is small enough to enumerate rank sums (work grows with its square)
EXACT_MAX_TOTAL = 1000


class StatisticalTest(Enum):
    CHI2 = "Chi2"
    MANN_WHITNEY_U = "MannWhitneyU"


@dataclass(frozen=True)
class TestResult:
    """
    Outcome of one test. Degenerate tests (a zero marginal, an all-tied sample) have statistic 0 and p = 1.
    """
    __test__ = False

    statistic: float
    p_value: float
    method: StatisticalTest
    degenerate: bool = False
    exact: bool = False
    significant_after_bh: bool = False

    def __post_init__(self):
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value {self.p_value} is outside [0, 1].")

    def with_significance(self, significant: bool) -> "TestResult":
        return replace(self, significant_after_bh=bool(significant))


@dataclass(frozen=True)
class ContingencyTable2x2:
    """
    Counts of a Boolean feature by class.

    a: present in H1, b: present in H0, c: absent in H1, d: absent in H0.
    """
    a: int
    b: int
    c: int
    d: int

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) < 0:
            raise ValueError("Contingency counts must be nonnegative.")
        if self.a + self.b + self.c + self.d == 0:
            raise ValueError("Contingency table is empty.")

    @classmethod
    def from_columns(cls, present: np.ndarray, hospitalized: np.ndarray) -> "ContingencyTable2x2":
        present, hospitalized = np.asarray(present, dtype=bool), np.asarray(hospitalized, dtype=bool)
        return cls(
            int((present & hospitalized).sum()), int((present & ~hospitalized).sum()),
            int((~present & hospitalized).sum()), int((~present & ~hospitalized).sum()),
        )

    def as_array(self) -> np.ndarray:
        return np.array([[self.a, self.b], [self.c, self.d]], dtype=float)


def chi2_contingency(table: ContingencyTable2x2) -> TestResult:
    """
    Pearson chi-squared test of independence on a 2x2 table, without continuity correction.

    Parameters:
        table (ContingencyTable2x2): Observed counts.

    Returns:
        TestResult: Statistic and p-value from the chi-squared distribution with one degree of freedom;
            degenerate with p = 1 when a row or column sum is zero.
    """
    observed = table.as_array()
    rows, columns = observed.sum(axis=1), observed.sum(axis=0)
    if (rows == 0).any() or (columns == 0).any():
        return TestResult(0.0, 1.0, StatisticalTest.CHI2, degenerate=True)
    expected = np.outer(rows, columns) / observed.sum()
    statistic = float(((observed - expected) ** 2 / expected).sum())
    # survival function of chi2(1) = Q(1/2, x/2)
    p_value = float(gammaincc(0.5, statistic / 2.0))
    return TestResult(statistic, min(max(p_value, 0.0), 1.0), StatisticalTest.CHI2)


def _rank_sum_counts(doubled_ranks: np.ndarray, size: int) -> np.ndarray:
    """
    Number of ways to pick `size` of the pooled observations per doubled rank sum. Counts are floats
    so that large pooled samples cannot overflow.
    """
    total = int(np.sort(doubled_ranks)[-size:].sum())
    counts = np.zeros((size + 1, total + 1))
    counts[0, 0] = 1
    for picked, rank in enumerate(doubled_ranks, start=1):
        for k in range(min(picked, size), 0, -1):
            counts[k, rank:] += counts[k - 1, :total + 1 - rank]
    return counts[size]


def _exact_p_value(ranks: np.ndarray, n1: int, n2: int, u: float) -> float:
    # Midranks are multiples of 1/2, so doubled ranks and doubled U are integers
    doubled = np.rint(2 * ranks).astype(np.int64)
    counts = _rank_sum_counts(doubled, n1)
    sums = np.arange(len(counts))
    deviation = np.abs(sums - n1 * (n1 + 1) - n1 * n2)
    observed = abs(int(round(2 * u)) - n1 * n2)
    return float(counts[deviation >= observed].sum() / counts.sum())


def _normal_p_value(ranks: np.ndarray, n1: int, n2: int, u: float) -> float:
    n = n1 + n2
    _, ties = np.unique(ranks, return_counts=True)
    tie_term = float((ties ** 3 - ties).sum()) / (n * (n - 1))
    sigma = math.sqrt(n1 * n2 / 12.0 * ((n + 1) - tie_term))
    z = max(abs(u - n1 * n2 / 2.0) - 0.5, 0.0) / sigma
    return float(min(1.0, 2.0 * norm.sf(z)))


def mann_whitney_u(x, y) -> TestResult:
    """
    Two-sided Mann-Whitney U test with midranks for ties.

    The statistic is U of the first sample. The p-value is exact (enumeration of the rank sums of all
    subsets, ties included) when the smaller sample has at most 8 values and the pooled sample at most
    1000, otherwise it comes from the tie-corrected normal approximation with continuity correction.

    Parameters:
        x: First sample.
        y: Second sample.

    Returns:
        TestResult: U of `x`, the two-sided p-value and whether it is exact.

    Raises:
        ValueError: If a sample is empty.
    """
    x, y = np.asarray(x, dtype=float).ravel(), np.asarray(y, dtype=float).ravel()
    n1, n2 = len(x), len(y)
    if n1 == 0 or n2 == 0:
        raise ValueError("Mann-Whitney U needs two non-empty samples.")
    ranks = rankdata(np.concatenate([x, y]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)

    if np.all(ranks == ranks[0]):
        return TestResult(u, 1.0, StatisticalTest.MANN_WHITNEY_U, degenerate=True)
    exact = min(n1, n2) <= EXACT_MAX_SMALLER and n1 + n2 <= EXACT_MAX_TOTAL
    if exact:
        # enumerate subsets of the smaller sample's size; the two-sided p is symmetric in the choice
        if n1 <= n2:
            p_value = _exact_p_value(ranks, n1, n2, u)
        else:
            p_value = _exact_p_value(np.concatenate([ranks[n1:], ranks[:n1]]), n2, n1, n1 * n2 - u)
    else:
        if min(n1, n2) <= EXACT_MAX_SMALLER:
            log.info("Mann-Whitney U on %d vs %d values uses the normal approximation (pooled sample above %d)",
                     n1, n2, EXACT_MAX_TOTAL)
        p_value = _normal_p_value(ranks, n1, n2, u)
    return TestResult(u, min(p_value, 1.0), StatisticalTest.MANN_WHITNEY_U, exact=exact)
