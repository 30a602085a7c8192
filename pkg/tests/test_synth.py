import json

import numpy as np
import pytest
from scipy.special import expit

from components.cohort.evidence import CONFIRMED_CODE, SUSPECTED_CODE
from components.cohort.hierarchy import CodeHierarchy
from components.cohort.patterns import PatternSet
from components.cohort.selection import build_cohort
from components.errors import ConfigurationError
from components.features.builder import SplitConfig
from components.features.fused import count_leakage_violations
from components.features.intervals import default_interval_scheme
from components.features.scenario import apply_scenario
from components.features.spec import default_feature_spec
from components.features.transform import fit_transform
from components.records.record import RecordKind
from components.records.store import ingest_records
from components.synth.config import (
    DEFAULT_CODE_MIX, SYNTH_DIR, GeneratorConfig, check_generator_config, load_generator_config,
)
from components.synth.generator import (
    SUSPECTED_CONCEPT, SUSPECTED_TEXT, build_planted_model, generate_cohort, patient_id,
)
from components.synth.planted import (
    AGE_BIN_NAMES, ground_truth_ranking, planted_prevalence, rank_coefficients, read_truth,
)
from helpers import PATTERN_DIR


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    directory = tmp_path_factory.mktemp("synth")
    config = GeneratorConfig(n_patients=2000, seed=5)
    summary = generate_cohort(config, directory / "records.jsonl", directory / "truth.jsonl")
    return config, summary, directory / "records.jsonl", directory / "truth.jsonl"


@pytest.fixture(scope="module")
def recovered(generated):
    _, _, records, _ = generated
    store = ingest_records(records)
    hierarchy = CodeHierarchy.from_file(PATTERN_DIR / "hierarchy.tsv")
    return store, hierarchy, build_cohort(store, PatternSet(), hierarchy)


def test_config_defaults():
    config = check_generator_config({"n_patients": 10})

    assert config.target_prevalence == 0.125
    assert config.covid_code_mix == {"U07.1": 0.65, "U07.2": 0.2, "text": 0.1, "snomed": 0.05}
    assert config.planted == {}


@pytest.mark.parametrize("data, message", [
    ({"n_patients": 0}, "n_patients"),
    ({"n_patients": -3}, "n_patients"),
    ({}, "n_patients"),
    ({"n_patients": 10, "patients": 3}, "unknown keys"),
    ({"n_patients": 10, "target_prevalence": 1.0}, "target_prevalence"),
    ({"n_patients": 10, "missingness": {"labs": 1.5}}, "labs"),
    ({"n_patients": 10, "covid_code_mix": {"U07.1": 0.5, "U07.2": 0.2, "text": 0.1, "snomed": 0.0}}, "sum to 1"),
    ({"n_patients": 10, "covid_code_mix": {"U07.1": 0.7, "U07.2": 0.2, "text": 0.1}}, "covid_code_mix"),
    ({"n_patients": 10, "planted": {"hypoxia": {"log_odds": 2.0}}}, "hypoxia"),
    ({"n_patients": 10, "signal_strength": -1}, "signal_strength"),
])
def test_invalid_generator_config(data, message):
    with pytest.raises(ConfigurationError, match=message):
        check_generator_config(data)


def test_planted_prevalence_corrects_for_noise():
    assert planted_prevalence(0.125, 0.0) == 0.125
    assert planted_prevalence(0.125, 0.01) == pytest.approx(0.115 / 0.98)
    with pytest.raises(ConfigurationError, match="unachievable"):
        planted_prevalence(0.005, 0.01)
    with pytest.raises(ConfigurationError):
        planted_prevalence(0.3, 0.5)


def test_unachievable_prevalence_is_rejected(tmp_path):
    config = GeneratorConfig(n_patients=10, target_prevalence=0.02, noise=0.05)

    with pytest.raises(ConfigurationError, match="unachievable"):
        generate_cohort(config, tmp_path / "records.jsonl", tmp_path / "truth.jsonl")


@pytest.mark.parametrize("coefficients, expected", [
    ({"pneumonia": 1.7, "hypertension": 0.0}, ["pneumonia"]),
    ({"hypertension": 0.0, "age_ge80": 0.0}, []),
    ({"hypertension": 1.2, "age_ge80": 0.8}, ["hypertension", "age_ge80"]),
    ({"b": -2.0, "a": 2.0, "c": 0.5}, ["a", "b", "c"]),
])
def test_rank_coefficients(coefficients, expected):
    assert rank_coefficients(coefficients) == expected


def test_zero_signal_strength_plants_nothing():
    model = build_planted_model(GeneratorConfig(n_patients=1, signal_strength=0.0))

    assert all(value == 0.0 for value in model.coefficients.values())
    assert model.ranking() == []
    np.testing.assert_array_equal(model.boolean_probabilities(0), model.boolean_probabilities(1))


def test_full_signal_reproduces_marginals():
    model = build_planted_model(GeneratorConfig(n_patients=1, noise=0.0))
    index = model.boolean_names.index("hypertension")

    assert model.boolean_probabilities(0)[index] == pytest.approx(0.3222)
    assert model.boolean_probabilities(1)[index] == pytest.approx(0.7278)
    assert model.age_probabilities(1)[-1] == pytest.approx(17.55 / 99.99, rel=1e-3)


def test_planted_override():
    config = GeneratorConfig(n_patients=1, noise=0.0, planted={"hypoxia": {"prevalence": 0.3, "log_odds": 4.5}})
    model = build_planted_model(config)
    index = model.boolean_names.index("hypoxia")
    p0, p1 = model.boolean_probabilities(0)[index], model.boolean_probabilities(1)[index]

    assert model.coefficients["hypoxia"] == pytest.approx(4.5)
    assert 0.125 * p1 + 0.875 * p0 == pytest.approx(0.3)


def test_unknown_planted_feature():
    with pytest.raises(ConfigurationError, match="not Boolean features"):
        build_planted_model(GeneratorConfig(n_patients=1, planted={"unicorn": {"prevalence": 0.1, "log_odds": 1.0}}))


def test_log_odds_are_the_exact_posterior():
    model = build_planted_model(GeneratorConfig(n_patients=1))
    rng = np.random.default_rng(0)
    booleans, bins = model.sample_profiles(rng.integers(0, 2, size=50), rng)
    p0, p1 = model.boolean_probabilities(0), model.boolean_probabilities(1)
    a0, a1 = model.age_probabilities(0), model.age_probabilities(1)

    likelihood1 = np.where(booleans, np.log(p1), np.log1p(-p1)).sum(axis=1) + np.log(a1[bins])
    likelihood0 = np.where(booleans, np.log(p0), np.log1p(-p0)).sum(axis=1) + np.log(a0[bins])
    posterior = np.log(model.prevalence) - np.log1p(-model.prevalence) + likelihood1 - likelihood0

    np.testing.assert_allclose(model.log_odds(booleans, bins), posterior, atol=1e-8)
    coefficients = model.coefficients
    linear = model.bias + booleans @ np.array([coefficients[name] for name in model.boolean_names]) \
        + np.array([coefficients[AGE_BIN_NAMES[b]] for b in bins])
    np.testing.assert_allclose(expit(linear), expit(posterior), atol=1e-10)


def test_sample_profiles_follow_class_probabilities():
    model = build_planted_model(GeneratorConfig(n_patients=1))
    rng = np.random.default_rng(1)
    booleans, bins = model.sample_profiles(np.ones(100000, dtype=int), rng)

    np.testing.assert_allclose(booleans.mean(axis=0), model.boolean_probabilities(1), atol=0.01)
    np.testing.assert_allclose(np.bincount(bins, minlength=9) / 100000, model.age_probabilities(1), atol=0.01)


def test_planted_signal_preset():
    config = load_generator_config(SYNTH_DIR / "planted_signal.json")
    model = build_planted_model(config)

    assert config.n_patients == 20000
    assert sorted(config.planted) == ["diabetes", "dyspnea", "hypertension", "hypoxia", "pneumonia"]
    assert model.ranking()[0] == "hypoxia"
    assert all(abs(model.coefficients[name]) >= 2 for name in config.planted)


def test_late_signal_preset():
    config = load_generator_config(SYNTH_DIR / "late_signal.json")

    assert config.late_signal == 3.0 and config.signal_strength == 0.5


def test_generation_is_deterministic(tmp_path):
    config = GeneratorConfig(n_patients=150, seed=42)
    generate_cohort(config, tmp_path / "a.jsonl", tmp_path / "a_truth.jsonl")
    generate_cohort(config, tmp_path / "b.jsonl", tmp_path / "b_truth.jsonl")
    generate_cohort(GeneratorConfig(n_patients=150, seed=43), tmp_path / "c.jsonl", tmp_path / "c_truth.jsonl")

    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    assert (tmp_path / "a_truth.jsonl").read_bytes() == (tmp_path / "b_truth.jsonl").read_bytes()
    assert (tmp_path / "a.jsonl").read_bytes() != (tmp_path / "c.jsonl").read_bytes()


def test_patients_do_not_depend_on_each_other(tmp_path):
    generate_cohort(GeneratorConfig(n_patients=20, seed=3), tmp_path / "small.jsonl", tmp_path / "small_truth.jsonl")
    generate_cohort(GeneratorConfig(n_patients=40, seed=3), tmp_path / "large.jsonl", tmp_path / "large_truth.jsonl")
    small = (tmp_path / "small.jsonl").read_text().splitlines()
    large = (tmp_path / "large.jsonl").read_text().splitlines()

    assert large[:len(small)] == small


def _covid_diagnoses(records_path):
    return [record for record in ingest_records(records_path)
            if record.kind == RecordKind.DIAGNOSIS
            and (record.code in (CONFIRMED_CODE, SUSPECTED_CODE, SUSPECTED_CONCEPT) or record.text == SUSPECTED_TEXT)]


@pytest.mark.parametrize("share, expected", [
    ("text", {("", SUSPECTED_TEXT)}),
    ("snomed", {(SUSPECTED_CONCEPT, "")}),
    ("U07.2", {(SUSPECTED_CODE, "COVID-19, virus not identified")}),
])
def test_covid_code_mix_shares_are_separate(tmp_path, share, expected):
    mix = {"U07.1": 0.0, "U07.2": 0.0, "text": 0.0, "snomed": 0.0, share: 1.0}
    config = GeneratorConfig(n_patients=120, seed=8, covid_code_mix=mix)
    generate_cohort(config, tmp_path / "records.jsonl", tmp_path / "truth.jsonl")

    diagnoses = _covid_diagnoses(tmp_path / "records.jsonl")

    assert diagnoses
    assert {(record.code, record.text) for record in diagnoses} == expected


def test_default_mix_emits_every_share(generated):
    _, _, records, _ = generated
    diagnoses = _covid_diagnoses(records)
    shares = {
        "U07.1": sum(record.code == CONFIRMED_CODE for record in diagnoses),
        "U07.2": sum(record.code == SUSPECTED_CODE for record in diagnoses),
        "text": sum(record.code == "" for record in diagnoses),
        "snomed": sum(record.code == SUSPECTED_CONCEPT for record in diagnoses),
    }

    for key, expected in DEFAULT_CODE_MIX.items():
        assert shares[key] / len(diagnoses) == pytest.approx(expected, abs=0.03), key


def test_generated_records_are_valid(generated, recovered):
    config, summary, _, _ = generated
    store, _, _ = recovered

    assert len(store) == config.n_patients
    assert store.rejected == 0
    assert store.accepted == summary.records
    assert store.patient_ids[0] == patient_id(0) == "P0000000"


def test_truth_file(generated):
    config, summary, _, truth = generated
    header, rows = read_truth(truth)
    model = build_planted_model(config)

    assert header["kind"] == "header"
    assert header["coefficients"] == pytest.approx(model.coefficients)
    assert header["bias"] == pytest.approx(model.bias)
    assert ground_truth_ranking(truth) == model.ranking()
    assert len(rows) == config.n_patients
    assert sum(row["observed_label"] for row in rows) == summary.observed_hospitalized
    assert all((row["admission_offset"] is None) == (row["observed_label"] == 0) for row in rows)


def test_missing_truth_file(tmp_path):
    with pytest.raises(OSError):
        ground_truth_ranking(tmp_path / "missing.jsonl")


def test_prevalence_is_close_to_target(generated):
    config, summary, _, _ = generated

    assert abs(summary.observed_hospitalized / config.n_patients - config.target_prevalence) < 0.025


def test_cohort_engine_recovers_truth(generated, recovered):
    config, _, _, truth = generated
    _, rows = read_truth(truth)
    _, _, cohort = recovered
    expected = {row["patient_id"]: row for row in rows if row["in_cohort"]}

    assert {entry.patient_id for entry in cohort} == set(expected)
    for entry in cohort:
        row = expected[entry.patient_id]
        assert entry.anchor_day == row["anchor_day"]
        assert int(entry.hospitalized) == row["observed_label"]
        assert entry.admission_offset == row["admission_offset"]
    flipped = sum(int(entry.hospitalized) != expected[entry.patient_id]["label"] for entry in cohort)
    assert abs(flipped / len(cohort) - config.noise) <= 0.01


def test_no_leakage_on_generated_cohort(recovered):
    store, hierarchy, cohort = recovered
    train, test, _ = fit_transform(cohort, store, default_feature_spec(), default_interval_scheme(),
                                   SplitConfig(seed=0), hierarchy)

    for features in (train, test, apply_scenario(test, "one-day-before")):
        assert features.labels.any()
        assert count_leakage_violations(features) == 0


def test_record_file_is_canonical(generated):
    _, _, records, _ = generated
    with open(records, encoding="utf-8") as f:
        first = json.loads(f.readline())

    assert list(first) == ["patient_id", "kind", "code_system", "code", "text"]


@pytest.mark.slow
def test_large_cohort_statistics(tmp_path):
    config = GeneratorConfig(n_patients=20000, seed=9)
    summary = generate_cohort(config, tmp_path / "records.jsonl", tmp_path / "truth.jsonl")
    _, rows = read_truth(tmp_path / "truth.jsonl")
    offsets = [row["admission_offset"] for row in rows if row["observed_label"]]

    assert abs(summary.observed_hospitalized / config.n_patients - 0.125) <= 0.01
    assert np.mean([offset <= 4 for offset in offsets]) >= 0.75
