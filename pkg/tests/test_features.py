import numpy as np
import pytest

from components.cohort.evidence import EvidenceClass
from components.cohort.hierarchy import CodeHierarchy
from components.cohort.selection import CohortEntry, Label
from components.errors import ConfigurationError
from components.features.aggregate import aggregate_boolean, aggregate_observation
from components.features.builder import SplitConfig, build_raw_features, drop_unusable_rows
from components.features.container import read_features, write_features
from components.features.fused import Scenario, count_leakage_violations, unflatten_temporal
from components.features.intervals import (
    DEFAULT_RANGES, OUT_OF_RANGE, IntervalScheme, assign_interval, default_interval_scheme, period_of_interest,
)
from components.features.scenario import apply_scenario
from components.features.spec import AGGREGATES, default_feature_spec
from components.features.transform import NormalizationStats, fit_transform
from components.records.record import CodeSystem
from components.records.store import RecordStore
from helpers import demographic, diagnosis, lab

CRP = "1988-5"
SPO2 = "59408-5"


@pytest.fixture(scope="module")
def spec():
    return default_feature_spec()


@pytest.fixture(scope="module")
def scheme():
    return default_interval_scheme()


def conditions_by_name(spec):
    return {condition.name: condition for condition in spec.conditions}


def channel(spec, quantity: str, aggregate: str = "last") -> int:
    return spec.channel_names.index(f"{quantity}_{aggregate}")


def small_cohort():
    """
    Six patients anchored on day 100; P1 is admitted on offset 3, P2 on offset 6.
    """
    records = []
    for index in range(1, 7):
        pid = f"P{index}"
        records += [demographic(pid, f"age_years:{30 + 7 * index}"), demographic(pid, "gender:M" if index % 2 else "gender:F")]
        records += [lab(pid, 100 + index % 3, CRP, 2.0 + index), lab(pid, 99, SPO2, 90.0 + index)]
    records += [lab("P1", 101, CRP, 11.0), lab("P1", 102, CRP, 30.0), lab("P1", 103, CRP, 50.0)]
    records += [diagnosis("P1", 101, "R05"), diagnosis("P2", 50, "I10")]
    cohort = [
        CohortEntry("P1", 100, Label.H1, 3, EvidenceClass.CONFIRMED),
        CohortEntry("P2", 100, Label.H1, 6, EvidenceClass.SUSPECTED),
    ] + [CohortEntry(f"P{index}", 100, Label.H0, None, EvidenceClass.CONFIRMED) for index in range(3, 7)]
    return cohort, RecordStore(records)


@pytest.mark.parametrize("offset, expected", [
    (-400, 0), (-29, 0), (-28, 1), (-15, 1), (-14, 2), (-8, 2), (-7, 3), (-1, 3),
    (0, 4), (3, 7), (6, 10), (7, 11), (9, 11), (10, 12), (13, 12), (14, 13), (26, 16), (28, 16),
    (29, OUT_OF_RANGE), (100, OUT_OF_RANGE),
])
def test_assign_interval(offset, expected, scheme):
    assert assign_interval(offset, scheme) == expected


def test_interval_labels(scheme):
    labels = scheme.labels

    assert len(labels) == 17
    assert labels[0] == "d<-28"
    assert labels[2] == "d-14..-8"
    assert labels[4] == "d0"
    assert labels[11] == "d7..9"
    assert labels[16] == "d26..28"


@pytest.mark.parametrize("ranges", [
    DEFAULT_RANGES[:-1],
    ((-100, -28),) + DEFAULT_RANGES[1:],
    DEFAULT_RANGES[:-1] + ((26, 30),),
    DEFAULT_RANGES[:5] + ((2, 2),) + DEFAULT_RANGES[6:],
])
def test_invalid_interval_scheme(ranges):
    with pytest.raises(ConfigurationError, match="Interval error"):
        IntervalScheme(ranges)


@pytest.mark.parametrize("label, admission, shift, upper, first_masked_out", [
    (Label.H1, 5, 0, 5, 9),
    (Label.H1, 5, 1, 4, 8),
    (Label.H1, 0, 0, 0, 4),
    (Label.H1, 28, 0, 28, 17),
    (Label.H0, None, 0, 29, 17),
    (Label.H0, None, 1, 29, 17),
])
def test_period_of_interest(label, admission, shift, upper, first_masked_out, scheme):
    period = period_of_interest(100, label, admission, scheme, shift)

    assert (period.lower, period.upper) == (-14, upper)
    expected = [2 <= index < first_masked_out for index in range(17)]
    assert list(period.interval_mask) == expected
    assert period.admits(-14) and not period.admits(-15) and not period.admits(upper)


def test_period_of_interest_requires_admission_for_h1():
    with pytest.raises(ValueError):
        period_of_interest(100, Label.H1, None)


def test_aggregate_observation():
    aggregate = aggregate_observation([(2, 7.1), (4, 5.3)])

    assert aggregate.last == pytest.approx(5.3)
    assert aggregate.min == pytest.approx(5.3)
    assert aggregate.max == pytest.approx(7.1)
    assert aggregate.mean == pytest.approx(6.2)
    assert aggregate_observation([]) is None


def test_aggregate_observation_same_day_keeps_ingestion_order():
    assert aggregate_observation([(3, 1.0), (3, 2.0), (1, 9.0)]).last == 2.0


def test_aggregate_boolean_scopes(spec, scheme):
    conditions = conditions_by_name(spec)
    hierarchy = CodeHierarchy({}, [])
    anchor = 500
    period = period_of_interest(anchor, Label.H1, 6, scheme)
    timeline = [
        diagnosis("P", anchor - 400, "I10"),
        diagnosis("P", anchor + 10, "R05"),
        diagnosis("P", anchor - 100, text="stroke", system=CodeSystem.NONE),
        diagnosis("P", anchor + 2, text="dyspnea", system=CodeSystem.NONE),
    ]

    def value(name):
        return aggregate_boolean(timeline, conditions[name], period, anchor, hierarchy)

    assert value("hypertension")
    assert not value("cough")
    assert value("cerebrovascular_accident_past")
    assert not value("cerebrovascular_accident_present")
    assert value("dyspnea")
    assert not value("diabetes")


def test_feature_shape(spec, scheme):
    cohort, store = small_cohort()
    train, test, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))

    for features in (train, test):
        assert (features.h, features.m, features.t, features.k) == (77, 88, 17, 1573)
        assert features.X_early.shape == (features.n, 1573)
        assert len(features.feature_names) == 1573
    assert train.n + test.n == len(cohort)


def test_early_fusion_layout(spec, scheme):
    cohort, store = small_cohort()
    train, _, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))
    X_early = train.X_early

    np.testing.assert_array_equal(unflatten_temporal(X_early, train.m, train.t), train.X2)
    column = channel(spec, "crp", "max") * train.t + 6
    np.testing.assert_array_equal(X_early[:, column], train.X2[:, channel(spec, "crp", "max"), 6])
    np.testing.assert_array_equal(X_early[:, train.m * train.t:], train.X1)
    assert train.feature_names[column] == "crp_max[d2]"


def test_raw_features_follow_timeline(spec, scheme):
    cohort, store = small_cohort()
    raw = build_raw_features(cohort, store, spec, scheme)
    crp_last, crp_max = channel(spec, "crp", "last"), channel(spec, "crp", "max")
    names = spec.tabular_names

    # P1 admitted on offset 3: day 101 holds two values, day 103 is cut off
    np.testing.assert_allclose(raw.temporal[0, crp_last:crp_last + len(AGGREGATES), 5], [11.0, 3.0, 11.0, 7.0])
    assert raw.temporal[0, crp_max, 6] == 30.0
    assert np.isnan(raw.temporal[0, crp_max, 7])
    assert raw.source_day[0, crp_max, 6] == 2
    assert raw.tabular[0, names.index("cough")] == 1.0
    assert raw.tabular[1, names.index("hypertension")] == 1.0
    assert raw.tabular[0, names.index("age_30_40")] == 1.0
    assert raw.tabular[0, names.index("gender_male")] == 1.0
    assert raw.tabular[1, names.index("gender_male")] == 0.0
    assert list(raw.admission_offsets) == [3, 6, -1, -1, -1, -1]


def test_rows_without_age_are_dropped(spec, scheme):
    cohort, store = small_cohort()
    records = list(store) + [lab("P7", 101, CRP, 4.0)]
    cohort = cohort + [CohortEntry("P7", 100, Label.H0, None, EvidenceClass.CONFIRMED)]
    raw = build_raw_features(cohort, RecordStore(records), spec, scheme)

    assert raw.tabular[-1, spec.tabular_names.index("age_unknown")] == 1.0
    kept = drop_unusable_rows(raw)
    assert kept.patient_ids == [f"P{index}" for index in range(1, 7)]


def test_normalization_statistics(caplog):
    rng = np.random.default_rng(3)
    temporal = rng.normal(5.0, 2.0, size=(60, 3, 4))
    temporal[rng.random(temporal.shape) < 0.3] = np.nan
    temporal[:, 2, 0] = 7.0
    temporal[:, 2, 1] = np.nan
    with caplog.at_level("WARNING"):
        stats = NormalizationStats.fit(temporal)
    flat = temporal.reshape(60, -1)

    imputed = stats.impute(flat)
    np.testing.assert_array_equal(stats.impute(imputed), imputed)
    np.testing.assert_allclose(stats.median[0], np.nanmedian(flat[:, 0]))

    normalized = stats.transform(temporal).reshape(60, -1)
    live = np.setdiff1d(np.arange(12), stats.constant_columns)
    np.testing.assert_allclose(normalized[:, live].mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(normalized[:, live].std(axis=0), 1.0)
    assert set(stats.constant_columns) == {8, 9}
    assert not normalized[:, [8, 9]].any()
    assert "2 of 12 continuous columns are constant" in caplog.text


def test_missing_values_are_imputed_with_the_training_median(spec, scheme):
    cohort, store = small_cohort()
    train, test, stats = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=1))
    crp_last = channel(spec, "crp", "last")
    column = crp_last * 17 + 4
    # CRP on offset 0 is only measured for P3 and P6
    observed = {"P3": 5.0, "P6": 8.0}
    train_values = [observed[pid] for pid in train.patient_ids if pid in observed]

    assert stats.median[column] == pytest.approx(np.median(train_values) if train_values else 0.0)
    imputed = 0.0 if column in stats.constant_columns else (stats.median[column] - stats.mean[column]) / stats.std[column]
    for features in (train, test):
        for row, pid in enumerate(features.patient_ids):
            if pid not in observed:
                assert not features.mask2[row, crp_last, 4]
                assert features.X2[row, crp_last, 4] == pytest.approx(imputed)


def test_gp_scenario_drops_unavailable_features(spec, scheme):
    cohort, store = small_cohort()
    train, _, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))
    gp = apply_scenario(train, Scenario.GP)

    assert gp.scenario == Scenario.GP
    assert train.k - gp.k == 16 + 2 * 4 * 17
    assert "pneumonia" not in gp.tabular_names and "hypertension" in gp.tabular_names
    assert not any(name.startswith(("d_dimer", "hs_troponin_t")) for name in gp.channel_names)
    assert train.k == 1573


def test_one_day_before_scenario(spec, scheme):
    cohort, store = small_cohort()
    splits = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))[:2]
    crp_max = channel(spec, "crp", "max")

    for features in splits:
        shifted = apply_scenario(features, "one-day-before")
        assert shifted.scenario == Scenario.ONE_DAY_BEFORE
        for row, pid in enumerate(features.patient_ids):
            if pid == "P1":
                assert features.mask2[row, crp_max, 6] and not shifted.mask2[row, crp_max, 6]
                assert shifted.mask2[row, crp_max, 5]
            if not features.labels[row]:
                np.testing.assert_array_equal(shifted.X2[row], features.X2[row])
                np.testing.assert_array_equal(shifted.X1[row], features.X1[row])
        assert count_leakage_violations(shifted) == 0


def test_unknown_scenario(spec, scheme):
    cohort, store = small_cohort()
    train, _, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))

    with pytest.raises(ValueError):
        apply_scenario(train, "icu")


def test_leakage_counter(spec, scheme):
    cohort, store = small_cohort()
    train, test, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))

    assert count_leakage_violations(train) == 0 and count_leakage_violations(test) == 0
    features = train if "P1" in train.patient_ids else test
    row = features.patient_ids.index("P1")
    source_day = features.source_day2.copy()
    source_day[row, channel(spec, "crp", "max"), 5] = 3
    assert count_leakage_violations(features.with_values(source_day2=source_day)) == 1


def test_empty_cohort_is_rejected(spec, scheme):
    with pytest.raises(ValueError, match="Empty cohort"):
        fit_transform([], RecordStore([]), spec, scheme, SplitConfig(seed=0))


def test_feature_container_round_trip(tmp_path, spec, scheme):
    cohort, store = small_cohort()
    train, _, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=4))
    path = tmp_path / "train.bin"

    write_features(train, path)
    loaded = read_features(path)

    np.testing.assert_allclose(loaded.X_early, train.X_early, rtol=1e-6, atol=1e-6)
    np.testing.assert_array_equal(loaded.mask2, train.mask2)
    np.testing.assert_array_equal(loaded.source_day2, train.source_day2)
    np.testing.assert_array_equal(loaded.labels, train.labels)
    np.testing.assert_array_equal(loaded.admission_offsets, train.admission_offsets)
    assert loaded.patient_ids == train.patient_ids
    assert loaded.feature_names == train.feature_names
    assert (loaded.scenario, loaded.split_seed) == (Scenario.ALL, 4)


def test_truncated_feature_container(tmp_path, spec, scheme):
    cohort, store = small_cohort()
    train, _, _ = fit_transform(cohort, store, spec, scheme, SplitConfig(seed=0))
    path = tmp_path / "train.bin"
    write_features(train, path)
    path.write_bytes(path.read_bytes()[:-3])

    with pytest.raises(ConfigurationError, match="truncated"):
        read_features(path)
