import itertools

import numpy as np
import pytest
from scipy.stats import mannwhitneyu, rankdata

from components.features.builder import MISSING_DAY, RawFeatures
from components.features.intervals import default_interval_scheme
from components.features.spec import default_feature_spec
from components.stats.correction import benjamini_hochberg
from components.stats.hypothesis import (
    EXACT_MAX_TOTAL, ContingencyTable2x2, StatisticalTest, chi2_contingency, mann_whitney_u,
)
from components.stats.summary import (
    cohort_summary, format_summary, patient_values, summarize_raw, write_summary_tsv,
)
from components.synth.config import GeneratorConfig
from components.synth.generator import build_planted_model


def test_chi2_known_table():
    result = chi2_contingency(ContingencyTable2x2(30, 10, 10, 30))

    assert result.statistic == pytest.approx(20.0, abs=1e-9)
    assert result.p_value == pytest.approx(7.744e-6, rel=1e-3)
    assert result.method == StatisticalTest.CHI2
    assert not result.degenerate


def test_chi2_identical_proportions():
    result = chi2_contingency(ContingencyTable2x2(25, 25, 25, 25))

    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(1.0)


@pytest.mark.parametrize("table", [
    ContingencyTable2x2(0, 0, 10, 20),
    ContingencyTable2x2(5, 0, 7, 0),
])
def test_chi2_zero_marginal_is_degenerate(table):
    result = chi2_contingency(table)

    assert result.degenerate
    assert result.statistic == 0.0 and result.p_value == 1.0


def test_chi2_is_invariant_under_simultaneous_swaps():
    table = ContingencyTable2x2(17, 4, 9, 33)
    swapped = ContingencyTable2x2(table.d, table.c, table.b, table.a)

    assert chi2_contingency(swapped).statistic == pytest.approx(chi2_contingency(table).statistic)


def test_contingency_table_checks_counts():
    with pytest.raises(ValueError):
        ContingencyTable2x2(-1, 2, 3, 4)
    with pytest.raises(ValueError, match="empty"):
        ContingencyTable2x2(0, 0, 0, 0)


def test_contingency_from_columns():
    table = ContingencyTable2x2.from_columns([1, 1, 0, 0, 1], [True, False, True, False, False])

    assert (table.a, table.b, table.c, table.d) == (1, 2, 1, 1)


def test_mann_whitney_separated_samples():
    result = mann_whitney_u([1, 2, 3], [4, 5, 6])

    assert result.statistic == 0.0
    assert result.p_value == pytest.approx(0.1)
    assert result.method == StatisticalTest.MANN_WHITNEY_U


def test_mann_whitney_midranks():
    # pooled midranks: the three 1s share rank 2, the three 2s share rank 5
    result = mann_whitney_u([1, 1, 2], [1, 2, 2])

    assert result.statistic == pytest.approx(3.0)


@pytest.mark.parametrize("values", [[3.0, 1.0, 2.0], [1.5, 7.0, 7.0, 2.0, 9.0, 1.0, 4.0, 4.0, 4.0, 8.0, 0.5]])
def test_mann_whitney_identical_samples(values):
    result = mann_whitney_u(values, list(reversed(values)))

    assert result.statistic == pytest.approx(len(values) ** 2 / 2)
    assert result.p_value == pytest.approx(1.0)


def test_mann_whitney_all_tied_is_degenerate():
    result = mann_whitney_u([2, 2, 2], [2, 2])

    assert result.degenerate
    assert result.p_value == 1.0


def test_mann_whitney_empty_sample():
    with pytest.raises(ValueError):
        mann_whitney_u([], [1.0])


def _enumerated_p_value(x, y) -> float:
    n1, n2 = len(x), len(y)
    ranks = rankdata(np.concatenate([x, y]))
    observed = abs(2 * ranks[:n1].sum() - n1 * (n1 + 1) - n1 * n2)
    extreme = total = 0
    for subset in itertools.combinations(range(n1 + n2), n1):
        deviation = abs(2 * ranks[list(subset)].sum() - n1 * (n1 + 1) - n1 * n2)
        extreme += deviation >= observed - 1e-9
        total += 1
    return extreme / total


def test_exact_mann_whitney_matches_enumeration():
    rng = np.random.default_rng(12)
    for n1 in range(1, 12):
        for n2 in range(1, 13 - n1):
            # small integer values produce plenty of ties
            x, y = rng.integers(0, 5, size=n1), rng.integers(0, 5, size=n2)
            assert mann_whitney_u(x, y).p_value == pytest.approx(_enumerated_p_value(x, y), abs=1e-12), (n1, n2)
            assert mann_whitney_u(x, y).exact or len(set(x) | set(y)) == 1


def test_exact_distribution_up_to_the_pooled_limit():
    rng = np.random.default_rng(21)
    x, y = rng.normal(0.8, 1.0, size=5), rng.normal(0.0, 1.0, size=EXACT_MAX_TOTAL - 5)
    expected = mannwhitneyu(x, y, alternative="two-sided", method="exact")

    result = mann_whitney_u(x, y)
    swapped = mann_whitney_u(y, x)

    assert result.exact and swapped.exact
    assert result.p_value == pytest.approx(expected.pvalue, rel=1e-7)
    assert swapped.p_value == pytest.approx(result.p_value, rel=1e-12)


def test_small_sample_beyond_the_pooled_limit_is_reported(caplog):
    rng = np.random.default_rng(22)
    x, y = rng.normal(0.8, 1.0, size=5), rng.normal(0.0, 1.0, size=EXACT_MAX_TOTAL - 4)
    expected = mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)

    with caplog.at_level("INFO"):
        result = mann_whitney_u(x, y)

    assert not result.exact
    assert result.p_value == pytest.approx(expected.pvalue, rel=1e-9)
    assert "normal approximation" in caplog.text


def test_normal_approximation_matches_scipy():
    rng = np.random.default_rng(3)
    x, y = rng.integers(0, 30, size=40), rng.integers(3, 33, size=55)
    expected = mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)

    result = mann_whitney_u(x, y)

    assert result.statistic == pytest.approx(expected.statistic)
    assert result.p_value == pytest.approx(expected.pvalue, rel=1e-9)


def test_mann_whitney_is_rank_based():
    rng = np.random.default_rng(4)
    x, y = rng.normal(size=7), rng.normal(0.5, size=20)

    plain, transformed = mann_whitney_u(x, y), mann_whitney_u(np.exp(3 * x), np.exp(3 * y))

    assert transformed.statistic == plain.statistic
    assert transformed.p_value == pytest.approx(plain.p_value)


def test_bh_all_small_p_values_are_rejected():
    rejected, _ = benjamini_hochberg([0.0001] * 10, alpha=0.001)

    assert rejected.all()


def test_bh_step_up():
    rejected, adjusted = benjamini_hochberg([0.01, 0.02, 0.03, 0.04], alpha=0.05)

    assert rejected.all()
    np.testing.assert_allclose(adjusted, [0.04, 0.04, 0.04, 0.04])


def test_bh_nothing_rejected():
    rejected, adjusted = benjamini_hochberg([0.2, 0.9], alpha=0.001)

    assert not rejected.any()
    np.testing.assert_allclose(adjusted, [0.4, 0.9])


def test_bh_keeps_input_order():
    rejected, adjusted = benjamini_hochberg([0.9, 0.0001, 0.5, 0.0002], alpha=0.01)

    assert rejected.tolist() == [False, True, False, True]
    np.testing.assert_allclose(adjusted, [0.9, 0.0004, 2 / 3, 0.0004])


def _hand_applied_bh(p_values, alpha):
    m = len(p_values)
    order = sorted(range(m), key=lambda i: p_values[i])
    largest = 0
    for rank, index in enumerate(order, start=1):
        if p_values[index] <= alpha * rank / m:
            largest = rank
    rejected = [False] * m
    for index in order[:largest]:
        rejected[index] = True
    return rejected


def test_bh_matches_definition_on_random_vectors():
    rng = np.random.default_rng(99)
    for _ in range(20):
        m = int(rng.integers(1, 60))
        # mixture of signal and uniform noise
        p_values = np.where(rng.random(m) < 0.3, rng.random(m) * 1e-3, rng.random(m))
        for alpha in (0.001, 0.05):
            rejected, _ = benjamini_hochberg(p_values, alpha)
            assert rejected.tolist() == _hand_applied_bh(p_values.tolist(), alpha)


def test_bh_bounds_and_monotonicity():
    rng = np.random.default_rng(5)
    p_values = np.concatenate([rng.random(30) * 1e-3, rng.random(70)])
    previous = np.zeros(len(p_values), dtype=bool)
    for alpha in (0.0005, 0.001, 0.01, 0.05, 0.2):
        rejected, _ = benjamini_hochberg(p_values, alpha)
        assert (rejected >= previous).all()
        assert (rejected <= (p_values <= alpha)).all()
        assert (rejected >= (p_values <= alpha / len(p_values))).all()
        previous = rejected


@pytest.mark.parametrize("p_values, alpha", [([0.5, 1.2], 0.05), ([-0.1], 0.05), ([0.3], 0.0), ([0.3], 1.0)])
def test_bh_rejects_invalid_input(p_values, alpha):
    with pytest.raises(ValueError):
        benjamini_hochberg(p_values, alpha)


def test_summary_reproduces_planted_prevalences():
    model = build_planted_model(GeneratorConfig(n_patients=1, noise=0.0))
    rng = np.random.default_rng(8)
    labels = rng.random(200000) < 0.125
    booleans, _ = model.sample_profiles(labels.astype(int), rng)

    summary = cohort_summary(booleans, model.boolean_names, np.zeros((len(labels), 0)), [], labels, jobs=4)
    row = summary.boolean("hypertension")

    assert row.percent_h0 == pytest.approx(32.22, abs=1.0)
    assert row.percent_h1 == pytest.approx(72.78, abs=1.0)
    assert row.test.significant_after_bh
    assert row.test.p_value < 0.001
    percents = [row.percent_h1 for row in summary.booleans]
    assert percents == sorted(percents, reverse=True)


def test_summary_absent_feature_is_degenerate():
    labels = np.array([0, 0, 1, 1, 0], dtype=bool)
    tabular = np.array([[0, 1], [0, 0], [0, 1], [0, 1], [0, 0]])

    summary = cohort_summary(tabular, ["absent", "present"], np.zeros((5, 0)), [], labels)
    row = summary.boolean("absent")

    assert (row.percent_h0, row.percent_h1) == (0.0, 0.0)
    assert row.test.degenerate and row.test.p_value == 1.0
    assert not row.test.significant_after_bh
    assert summary.booleans[0].name == "present"


def test_summary_numeric_rows():
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 0], dtype=bool)
    numeric = np.array([
        [1.0, np.nan], [2.0, np.nan], [3.0, 5.0], [4.0, np.nan],
        [10.0, np.nan], [11.0, 6.0], [12.0, np.nan], [np.nan, np.nan],
    ])

    summary = cohort_summary(np.zeros((8, 0)), [], numeric, ["crp", "rare"], labels, alpha=0.2)
    crp, rare = summary.numerics

    assert crp.name == "crp"
    assert (crp.count_h0, crp.count_h1) == (4, 3)
    assert crp.quartiles_h0 == pytest.approx((1.75, 2.5, 3.25))
    assert crp.quartiles_h1 == pytest.approx((10.5, 11.0, 11.5))
    # U of the hospitalized sample: all three exceed all four
    assert crp.test.statistic == 12.0
    assert crp.test.p_value == pytest.approx(2 / 35)
    assert (rare.count_h0, rare.count_h1) == (1, 1)


def test_summary_class_without_values_is_degenerate():
    labels = np.array([0, 1, 1], dtype=bool)
    numeric = np.array([[np.nan], [2.0], [3.0]])

    row = cohort_summary(np.zeros((3, 0)), [], numeric, ["spo2"], labels).numeric("spo2")

    assert row.test.degenerate
    assert np.isnan(row.quartiles_h0[1])


def _raw_features(temporal: np.ndarray, labels) -> RawFeatures:
    spec = default_feature_spec()
    n = len(labels)
    return RawFeatures(
        patient_ids=[f"P{i}" for i in range(n)],
        labels=np.asarray(labels, dtype=bool),
        admission_offsets=np.full(n, -1, dtype=np.int32),
        tabular=np.zeros((n, spec.h)),
        temporal=temporal,
        source_day=np.full(temporal.shape, MISSING_DAY, dtype=np.int32),
        age_known=np.ones(n, dtype=bool),
        spec=spec,
        scheme=default_interval_scheme(),
    )


def test_patient_values_take_the_most_recent_interval():
    spec = default_feature_spec()
    temporal = np.full((3, spec.m, 17), np.nan)
    # channel 0 is "last" of the first quantity
    temporal[0, 0, 3] = 5.0
    temporal[0, 0, 9] = 7.0
    temporal[1, 0, 0] = 2.0
    temporal[1, 1, 12] = 99.0

    names, values = patient_values(_raw_features(temporal, [0, 1, 0]))

    assert names[0] == spec.quantities[0].name
    assert values.shape == (3, len(spec.quantities))
    assert values[0, 0] == 7.0
    assert values[1, 0] == 2.0
    assert np.isnan(values[2]).all()


def test_summary_outputs(tmp_path):
    spec = default_feature_spec()
    rng = np.random.default_rng(2)
    labels = np.arange(40) % 4 == 0
    temporal = np.full((40, spec.m, 17), np.nan)
    temporal[:, 0, 5] = rng.normal(size=40) + 3 * labels
    raw = _raw_features(temporal, labels)
    raw.tabular[:, 0] = labels

    summary = summarize_raw(raw)
    text = format_summary(summary)
    write_summary_tsv(summary, tmp_path / "summary.tsv")
    lines = (tmp_path / "summary.tsv").read_text(encoding="utf-8").splitlines()

    assert text.startswith("H0: 30 patients, H1: 10 patients")
    assert spec.tabular_names[0] in text
    assert lines[0].split("\t")[:4] == ["feature", "kind", "count_h0", "count_h1"]
    assert len(lines) == 1 + spec.h + len(spec.quantities)
    first = lines[1].split("\t")
    assert first[0] == spec.tabular_names[0]
    assert first[5] == "100.00"
    assert first[-1] == "**"
