import csv
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..features.builder import RawFeatures
from ..features.spec import AGGREGATES
from .correction import DEFAULT_ALPHA, benjamini_hochberg
from .hypothesis import StatisticalTest, TestResult, ContingencyTable2x2, chi2_contingency, mann_whitney_u

log = logging.getLogger(__name__)

STAR = "**"
TSV_COLUMNS = (
    "feature", "kind", "count_h0", "count_h1", "h0", "h1", "statistic", "p_value", "adjusted_p", "star",
)


@dataclass(frozen=True)
class BooleanRow:
    name: str
    count_h0: int
    count_h1: int
    percent_h0: float
    percent_h1: float
    test: TestResult
    adjusted_p: float


@dataclass(frozen=True)
class NumericRow:
    """
    Quartiles are NaN for a class without any value.
    """
    name: str
    count_h0: int
    count_h1: int
    quartiles_h0: tuple[float, float, float]
    quartiles_h1: tuple[float, float, float]
    test: TestResult
    adjusted_p: float


@dataclass(frozen=True)
class CohortSummary:
    n_h0: int
    n_h1: int
    booleans: tuple[BooleanRow, ...]
    numerics: tuple[NumericRow, ...]
    alpha: float

    def boolean(self, name: str) -> BooleanRow:
        return next(row for row in self.booleans if row.name == name)

    def numeric(self, name: str) -> NumericRow:
        return next(row for row in self.numerics if row.name == name)


def _quartiles(values: np.ndarray) -> tuple[float, float, float]:
    if len(values) == 0:
        return (float("nan"),) * 3
    q1, median, q3 = np.percentile(values, [25, 50, 75])
    return float(q1), float(median), float(q3)


def _numeric_test(h0: np.ndarray, h1: np.ndarray) -> TestResult:
    if len(h0) == 0 or len(h1) == 0:
        return TestResult(0.0, 1.0, StatisticalTest.MANN_WHITNEY_U, degenerate=True)
    # U of the hospitalized sample
    return mann_whitney_u(h1, h0)


def patient_values(raw: RawFeatures) -> tuple[list[str], np.ndarray]:
    """
    Most recent value of every quantity per patient within the period of interest.

    Returns:
        tuple[list[str], np.ndarray]: Quantity names and an n x q matrix, NaN where never measured.
    """
    names = [quantity.name for quantity in raw.spec.quantities]
    last = AGGREGATES.index("last")
    values = np.full((len(raw), len(names)), np.nan)
    for q in range(len(names)):
        channel = raw.temporal[:, len(AGGREGATES) * q + last, :]
        observed = ~np.isnan(channel)
        rows = np.flatnonzero(observed.any(axis=1))
        # intervals are in time order, so the last observed one holds the most recent value
        latest = channel.shape[1] - 1 - np.argmax(observed[rows, ::-1], axis=1)
        values[rows, q] = channel[rows, latest]
    return names, values


def cohort_summary(tabular: np.ndarray, tabular_names: Sequence[str], numeric: np.ndarray,
                   numeric_names: Sequence[str], labels: np.ndarray, alpha: float = DEFAULT_ALPHA,
                   jobs: int = 1) -> CohortSummary:
    """
    Compares the non-hospitalized (H0) and hospitalized (H1) populations feature by feature.

    Boolean features get their prevalence per class and a chi-squared test, numerical features the
    count, median and quartiles per class and a Mann-Whitney U test. Both tables are corrected
    separately with Benjamini-Hochberg at `alpha`. Rows are ordered by H1 prevalence (Booleans) or
    by number of measured patients (numerical), descending, ties by name.

    Parameters:
        tabular (np.ndarray): n x b Boolean (0/1) features.
        tabular_names: Names of the Boolean columns.
        numeric (np.ndarray): n x q raw values, NaN where missing.
        numeric_names: Names of the numerical columns.
        labels (np.ndarray): Hospitalization labels.
        alpha (float): Significance level after correction.
        jobs (int): Worker threads for the per-feature tests.

    Returns:
        CohortSummary: Both tables.
    """
    labels = np.asarray(labels, dtype=bool)
    tabular = np.asarray(tabular).reshape(len(labels), -1) != 0
    numeric = np.asarray(numeric, dtype=float).reshape(len(labels), -1)

    def boolean_test(column: int) -> TestResult:
        return chi2_contingency(ContingencyTable2x2.from_columns(tabular[:, column], labels))

    def numeric_test(column: int) -> TestResult:
        values = numeric[:, column]
        observed = ~np.isnan(values)
        return _numeric_test(values[observed & ~labels], values[observed & labels])

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        boolean_results = list(pool.map(boolean_test, range(tabular.shape[1])))
        numeric_results = list(pool.map(numeric_test, range(numeric.shape[1])))

    n_h0, n_h1 = int((~labels).sum()), int(labels.sum())
    booleans = []
    rejected, adjusted = benjamini_hochberg([result.p_value for result in boolean_results], alpha)
    for column, result in enumerate(boolean_results):
        count_h0 = int(tabular[~labels, column].sum())
        count_h1 = int(tabular[labels, column].sum())
        booleans.append(BooleanRow(
            tabular_names[column], count_h0, count_h1,
            100.0 * count_h0 / n_h0 if n_h0 else 0.0,
            100.0 * count_h1 / n_h1 if n_h1 else 0.0,
            result.with_significance(rejected[column]), float(adjusted[column]),
        ))

    numerics = []
    rejected, adjusted = benjamini_hochberg([result.p_value for result in numeric_results], alpha)
    for column, result in enumerate(numeric_results):
        values = numeric[:, column]
        h0, h1 = values[~np.isnan(values) & ~labels], values[~np.isnan(values) & labels]
        numerics.append(NumericRow(
            numeric_names[column], len(h0), len(h1), _quartiles(h0), _quartiles(h1),
            result.with_significance(rejected[column]), float(adjusted[column]),
        ))

    booleans.sort(key=lambda row: (-row.percent_h1, row.name))
    numerics.sort(key=lambda row: (-(row.count_h0 + row.count_h1), row.name))
    significant = sum(row.test.significant_after_bh for row in booleans + numerics)
    log.info("Compared %d Boolean and %d numerical features; %d significant at alpha %g",
             len(booleans), len(numerics), significant, alpha)
    return CohortSummary(n_h0, n_h1, tuple(booleans), tuple(numerics), alpha)


def summarize_raw(raw: RawFeatures, alpha: float = DEFAULT_ALPHA, jobs: int = 1) -> CohortSummary:
    """
    Summary of raw (not yet imputed or normalized) features.
    """
    names, values = patient_values(raw)
    return cohort_summary(raw.tabular, raw.spec.tabular_names, values, names, raw.labels, alpha, jobs)


def _star(result: TestResult) -> str:
    return STAR if result.significant_after_bh else ""


def _format_quartiles(quartiles: tuple[float, float, float]) -> str:
    q1, median, q3 = quartiles
    if np.isnan(median):
        return "-"
    return f"{median:.2f} [{q1:.2f}, {q3:.2f}]"


def format_summary(summary: CohortSummary) -> str:
    """
    Both tables as aligned plain text.
    """
    lines = [f"H0: {summary.n_h0} patients, H1: {summary.n_h1} patients "
             f"({STAR} p < {summary.alpha:g} after Benjamini-Hochberg)", ""]
    width = max([len(row.name) for row in summary.booleans + summary.numerics] + [7])

    lines.append(f"{'feature':<{width}}  {'H0 %':>7}  {'H1 %':>7}  {'chi2':>10}  {'p':>10}")
    for row in summary.booleans:
        lines.append(f"{row.name:<{width}}  {row.percent_h0:7.2f}  {row.percent_h1:7.2f}  "
                     f"{row.test.statistic:10.3f}  {row.test.p_value:10.3g}{_star(row.test)}")

    if summary.numerics:
        lines.append("")
        lines.append(f"{'feature':<{width}}  {'n H0':>6}  {'n H1':>6}  {'H0 median [IQR]':>24}  "
                     f"{'H1 median [IQR]':>24}  {'U':>12}  {'p':>10}")
        for row in summary.numerics:
            lines.append(f"{row.name:<{width}}  {row.count_h0:6d}  {row.count_h1:6d}  "
                         f"{_format_quartiles(row.quartiles_h0):>24}  {_format_quartiles(row.quartiles_h1):>24}  "
                         f"{row.test.statistic:12.1f}  {row.test.p_value:10.3g}{_star(row.test)}")
    return "\n".join(lines) + "\n"


def write_summary_tsv(summary: CohortSummary, path: Union[str, Path]) -> None:
    """
    Both tables as one tab-delimited file; class columns hold percentages (Boolean) or
    "median [q1, q3]" (numerical).
    """
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, delimiter="\t", lineterminator="\n")
        writer.writerow(TSV_COLUMNS)
        for row in summary.booleans:
            writer.writerow([row.name, "boolean", row.count_h0, row.count_h1, f"{row.percent_h0:.2f}",
                             f"{row.percent_h1:.2f}", f"{row.test.statistic:.6g}", f"{row.test.p_value:.6g}",
                             f"{row.adjusted_p:.6g}", _star(row.test)])
        for row in summary.numerics:
            writer.writerow([row.name, "numeric", row.count_h0, row.count_h1, _format_quartiles(row.quartiles_h0),
                             _format_quartiles(row.quartiles_h1), f"{row.test.statistic:.6g}",
                             f"{row.test.p_value:.6g}", f"{row.adjusted_p:.6g}", _star(row.test)])
