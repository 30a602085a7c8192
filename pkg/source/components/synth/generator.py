import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from ..cohort.evidence import CONFIRMED_CODE, SARS_COV_2_TEST, SUSPECTED_CODE
from ..errors import ConfigurationError
from ..features.intervals import HORIZON_END, LOOKBACK_DAYS
from ..features.spec import FeatureSpec, Scope
from ..records.record import AGE_PREFIX, GENDER_PREFIX, CodeSystem, EncounterType, RawRecord, RecordKind, ResultFlag
from ..records.store import record_line
from .config import GeneratorConfig
from .planted import LabDistribution, PlantedRiskModel, planted_prevalence, read_marginals, write_truth_header

log = logging.getLogger(__name__)

FIRST_ANCHOR_DAY = 60
LAST_ANCHOR_DAY = 425
SUSPECTED_TEXT = "suspected covid-19 infection"
SUSPECTED_CONCEPT = "1240751000000100"
RULED_OUT_TEXT = "covid-19 ruled out"
EXPOSURE_CODE, EXPOSURE_TEXT = "Z20.828", "exposure to covid-19"
LATE_SIGNAL_QUANTITY = "spo2"

# Distractor rates that are not part of the configuration
NEGATIVE_TEST_RATE = 0.2
RULED_OUT_RATE = 0.1
EXPOSURE_RATE = 0.05
REPEATED_DIAGNOSIS_RATE = 0.3
OLD_HOSPITALIZATION_RATE = 0.05
SHORT_VISIT_RATE = 0.15
OTHER_ENCOUNTER_RATE = 0.3
ADMISSION_TYPES = (EncounterType.INPATIENT, EncounterType.HOSPITAL_ENCOUNTER, EncounterType.EMERGENCY_ROOM)
ADMISSION_TYPE_WEIGHTS = (0.85, 0.05, 0.10)


@dataclass(frozen=True)
class GenerationSummary:
    n_patients: int
    planted_hospitalized: int
    observed_hospitalized: int
    in_cohort: int
    records: int


def patient_rng(seed: int, index: int) -> np.random.Generator:
    """
    Counter-based stream of one patient: the output of a patient does not depend on any other patient.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, index])))


def patient_id(index: int) -> str:
    return f"P{index:07d}"


def _significant(value: float, digits: int = 4) -> float:
    return float(f"{value:.{digits}g}")


class _PatientWriter(object):
    """
    Materializes the events of one patient from its planted label and profile.
    """

    def __init__(self, config: GeneratorConfig, model: PlantedRiskModel, spec: FeatureSpec, marginals: dict) -> None:
        self._config = config
        self._model = model
        self._conditions = list(spec.conditions)
        self._acute = [index for index, condition in enumerate(self._conditions)
                       if condition.scope in (Scope.ACUTE, Scope.PRESENT)]
        self._emission = marginals["conditions"]
        self._labs = model.labs
        self._shifted_labs = [lab for lab in self._labs if lab.mu0 != lab.mu1] or self._labs
        self._late = next((lab for lab in self._labs if lab.name == LATE_SIGNAL_QUANTITY), None)

    def generate(self, index: int) -> tuple[list[RawRecord], dict]:
        config = self._config
        rng = patient_rng(config.seed, index)
        pid = patient_id(index)

        label = int(rng.random() < self._model.prevalence)
        observed = label ^ int(rng.random() < config.noise)
        booleans, age_bins = self._model.sample_profiles(np.array([label]), rng)
        booleans, age_bin = booleans[0], int(age_bins[0])
        anchor = int(rng.integers(FIRST_ANCHOR_DAY, LAST_ANCHOR_DAY + 1))
        eligible = rng.random() >= config.ineligible_fraction
        missing_age = rng.random() < config.missing_age_fraction
        prior = bool(rng.random() < config.prior_hospitalization_fraction)
        admission = None
        if observed:
            early = rng.random() < config.early_admission_fraction
            admission = int(rng.integers(0, 5) if early else rng.integers(5, HORIZON_END))
        upper = HORIZON_END if admission is None else admission

        records = self._demographics(pid, age_bin, bool(booleans[-1]), missing_age, rng)
        records += self._covid_evidence(pid, anchor, eligible, rng)
        records += self._conditions_of(pid, anchor, upper, booleans, rng)
        records += self._measurements(pid, anchor, upper, label, rng)
        records += self._encounters(pid, anchor, admission, prior, rng)
        if admission is not None:
            if config.late_signal > 0 and self._late is not None:
                value = np.exp(self._late.mu1 - config.late_signal * self._late.sigma)
                records.append(self._measurement(pid, anchor + admission - 1, self._late, value))
            if rng.random() < config.leakage_bait_fraction:
                records += self._after_admission(pid, anchor, admission, rng)

        truth = {
            "patient_id": pid,
            "label": label,
            "observed_label": observed,
            "anchor_day": anchor,
            "admission_offset": admission,
            "in_cohort": bool(eligible and not prior),
            "prior_hospitalization": prior,
        }
        return records, truth

    def _demographics(self, pid: str, age_bin: int, male: bool, missing_age: bool, rng) -> list[RawRecord]:
        records = []
        if not missing_age:
            low, high = (0, 9) if age_bin == 0 else (10 * age_bin, 10 * age_bin + 9)
            if age_bin == 8:
                high = 99
            records.append(RawRecord(pid, RecordKind.DEMOGRAPHIC, code=f"{AGE_PREFIX}{int(rng.integers(low, high + 1))}"))
        records.append(RawRecord(pid, RecordKind.DEMOGRAPHIC, code=f"{GENDER_PREFIX}{'M' if male else 'F'}"))
        return records

    def _diagnosis(self, pid: str, day: int, rng) -> RawRecord:
        mix = self._config.covid_code_mix
        u = rng.random()
        if u < mix["U07.1"]:
            return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, code_system=CodeSystem.ICD10,
                             code=CONFIRMED_CODE, text="COVID-19")
        if u < mix["U07.1"] + mix["U07.2"]:
            return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, code_system=CodeSystem.ICD10,
                             code=SUSPECTED_CODE, text="COVID-19, virus not identified")
        if u < mix["U07.1"] + mix["U07.2"] + mix["text"] or not mix["snomed"]:
            return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, text=SUSPECTED_TEXT)
        # only reachable through the concept hierarchy
        return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, code_system=CodeSystem.SNOMED, code=SUSPECTED_CONCEPT)

    def _covid_evidence(self, pid: str, anchor: int, eligible: bool, rng) -> list[RawRecord]:
        records = [self._diagnosis(pid, anchor, rng)]
        if rng.random() < REPEATED_DIAGNOSIS_RATE:
            records.append(self._diagnosis(pid, anchor + int(rng.integers(1, 11)), rng))

        if eligible:
            test_day = anchor + int(np.clip(np.rint(rng.normal(0.0, 3.0)), -28, 28))
            records.append(self._test(pid, test_day, ResultFlag.POSITIVE))
        elif rng.random() < 0.5:
            distance = int(rng.integers(35, 61))
            records.append(self._test(pid, anchor + (distance if rng.random() < 0.5 else -distance), ResultFlag.POSITIVE))

        if rng.random() < NEGATIVE_TEST_RATE:
            records.append(self._test(pid, anchor - int(rng.integers(1, 11)), ResultFlag.NEGATIVE))
        if rng.random() < RULED_OUT_RATE:
            records.append(RawRecord(pid, RecordKind.DIAGNOSIS, day=anchor - int(rng.integers(1, 21)), text=RULED_OUT_TEXT))
        if rng.random() < EXPOSURE_RATE:
            records.append(RawRecord(pid, RecordKind.DIAGNOSIS, day=anchor - int(rng.integers(1, 11)),
                                     code_system=CodeSystem.ICD10, code=EXPOSURE_CODE, text=EXPOSURE_TEXT))
        return records

    @staticmethod
    def _test(pid: str, day: int, flag: ResultFlag) -> RawRecord:
        return RawRecord(pid, RecordKind.OBSERVATION, day=day, code_system=CodeSystem.LOINC,
                         code=SARS_COV_2_TEST, text="SARS-CoV-2 RNA", result_flag=flag)

    def _condition(self, pid: str, day: int, index: int, rng) -> RawRecord:
        condition = self._conditions[index]
        emission = self._emission[condition.name]
        code = emission.get("code") or (condition.icd10[0] if condition.icd10 else "")
        u = rng.random()
        if "snomed" in emission and u < 0.1:
            return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, code_system=CodeSystem.SNOMED,
                             code=emission["snomed"], text=emission["text"])
        if code and u < 0.8:
            return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, code_system=CodeSystem.ICD10,
                             code=code, text=emission["text"])
        return RawRecord(pid, RecordKind.DIAGNOSIS, day=day, text=emission["text"])

    def _conditions_of(self, pid: str, anchor: int, upper: int, booleans: np.ndarray, rng) -> list[RawRecord]:
        records = []
        for index in np.flatnonzero(booleans[:len(self._conditions)]):
            if self._conditions[index].scope in (Scope.CHRONIC, Scope.PAST):
                offset = int(rng.integers(-700, -LOOKBACK_DAYS))
            else:
                offset = int(rng.integers(-LOOKBACK_DAYS, upper))
            records.append(self._condition(pid, anchor + offset, int(index), rng))
        return records

    @staticmethod
    def _measurement(pid: str, day: int, lab: LabDistribution, value: float) -> RawRecord:
        return RawRecord(pid, RecordKind.OBSERVATION, day=day, code_system=CodeSystem.LOINC,
                         code=lab.loinc, value=_significant(value), unit=lab.unit or None)

    def _measurements(self, pid: str, anchor: int, upper: int, label: int, rng) -> list[RawRecord]:
        records = []
        missingness = self._config.missingness
        for lab in self._labs:
            if rng.random() >= missingness.get(lab.family, 0.0):
                continue
            count = 1 + min(int(rng.poisson(0.8)), 3)
            values = lab.sample(label, count, rng)
            for value in values:
                if rng.random() < 0.7:
                    offset = int(rng.integers(-3, min(upper, 8)))
                else:
                    offset = int(rng.integers(-LOOKBACK_DAYS, upper))
                records.append(self._measurement(pid, anchor + offset, lab, value))
        return records

    def _encounters(self, pid: str, anchor: int, admission: Optional[int], prior: bool, rng) -> list[RawRecord]:
        records = []
        if admission is not None:
            kind = ADMISSION_TYPES[int(rng.choice(len(ADMISSION_TYPES), p=ADMISSION_TYPE_WEIGHTS))]
            records.append(RawRecord(pid, RecordKind.ENCOUNTER, day=anchor + admission, encounter_type=kind,
                                     duration_hours=round(float(rng.uniform(25.0, 400.0)), 1)))
        if prior:
            records.append(RawRecord(pid, RecordKind.ENCOUNTER, day=anchor - int(rng.integers(1, 29)),
                                     encounter_type=EncounterType.INPATIENT,
                                     duration_hours=round(float(rng.uniform(30.0, 200.0)), 1)))
        if rng.random() < OLD_HOSPITALIZATION_RATE:
            records.append(RawRecord(pid, RecordKind.ENCOUNTER, day=anchor - int(rng.integers(60, 400)),
                                     encounter_type=EncounterType.INPATIENT,
                                     duration_hours=round(float(rng.uniform(30.0, 200.0)), 1)))
        if rng.random() < SHORT_VISIT_RATE:
            records.append(RawRecord(pid, RecordKind.ENCOUNTER, day=anchor + int(rng.integers(0, HORIZON_END)),
                                     encounter_type=EncounterType.EMERGENCY_ROOM,
                                     duration_hours=round(float(rng.uniform(1.0, 24.0)), 1)))
        if rng.random() < OTHER_ENCOUNTER_RATE:
            records.append(RawRecord(pid, RecordKind.ENCOUNTER, day=anchor + int(rng.integers(-30, HORIZON_END)),
                                     encounter_type=EncounterType.OTHER,
                                     duration_hours=round(float(rng.uniform(24.5, 72.0)), 1)))
        return records

    def _after_admission(self, pid: str, anchor: int, admission: int, rng) -> list[RawRecord]:
        """
        Events on or after the admission day; none of them may reach a feature.
        """
        records = []
        last = min(admission + 5, HORIZON_END - 1)
        for index in rng.choice(self._acute, size=int(rng.integers(1, 4)), replace=False):
            records.append(self._condition(pid, anchor + int(rng.integers(admission, last + 1)), int(index), rng))
        lab = self._shifted_labs[int(rng.integers(len(self._shifted_labs)))]
        for value in lab.sample(1, int(rng.integers(1, 3)), rng):
            records.append(self._measurement(pid, anchor + admission + int(rng.integers(0, 4)), lab, value))
        return records


def build_planted_model(config: GeneratorConfig, spec: Optional[FeatureSpec] = None,
                        marginals: Optional[dict] = None) -> PlantedRiskModel:
    """
    Planted model of a configuration: the prevalence is corrected for the label noise.

    Raises:
        ConfigurationError: If the target prevalence cannot be reached with the configured noise.
    """
    spec = spec or FeatureSpec.from_file(config.features)
    marginals = marginals or read_marginals(config.marginals)
    prevalence = planted_prevalence(config.target_prevalence, config.noise)
    return PlantedRiskModel.from_marginals(marginals, spec, prevalence, config.signal_strength, config.planted)


def generate_cohort(config: GeneratorConfig, records_path: Union[str, Path],
                    truth_path: Union[str, Path]) -> GenerationSummary:
    """
    Generates a synthetic cohort with a planted risk model.

    Every patient gets demographics, COVID-19 evidence, conditions drawn from the class-conditional
    marginals, measurements with family-wise missingness and, when hospitalized, a qualifying encounter.
    Distractors (negative tests, excluded diagnoses, short visits, prior hospitalizations, ineligible
    patients, events after the admission) exercise the cohort rules and the leakage guards.

    Parameters:
        config (GeneratorConfig): Generator parameters.
        records_path (str | Path): Destination of the record file.
        truth_path (str | Path): Destination of the truth file (header with the coefficients, then one
            line per patient).

    Returns:
        GenerationSummary: Counts of the generated cohort.

    Raises:
        ConfigurationError: If n_patients is not positive or the prevalence is unachievable.
    """
    if config.n_patients <= 0:
        raise ConfigurationError("Generator error: 'n_patients' must be a positive integer.")
    spec = FeatureSpec.from_file(config.features)
    marginals = read_marginals(config.marginals)
    model = build_planted_model(config, spec, marginals)
    writer = _PatientWriter(config, model, spec, marginals)

    planted = observed = in_cohort = count = 0
    with open(records_path, "w", encoding="utf-8", newline="\n") as records_file, \
            open(truth_path, "w", encoding="utf-8", newline="\n") as truth_file:
        write_truth_header(truth_file, model, target_prevalence=config.target_prevalence, noise=config.noise,
                           seed=config.seed, n_patients=config.n_patients, signal_strength=config.signal_strength,
                           late_signal=config.late_signal)
        for index in range(config.n_patients):
            records, truth = writer.generate(index)
            for record in records:
                records_file.write(record_line(record))
                records_file.write("\n")
            truth_file.write(record_truth_line(truth))
            planted += truth["label"]
            observed += truth["observed_label"]
            in_cohort += truth["in_cohort"]
            count += len(records)
            if (index + 1) % 10000 == 0:
                log.debug("Generated %d of %d patients", index + 1, config.n_patients)

    summary = GenerationSummary(config.n_patients, planted, observed, in_cohort, count)
    log.info("Generated %d patients (%d records): %d hospitalized (%.2f%%), %d cohort-eligible",
             summary.n_patients, summary.records, summary.observed_hospitalized,
             100.0 * summary.observed_hospitalized / summary.n_patients, summary.in_cohort)
    return summary


def record_truth_line(truth: dict) -> str:
    return json.dumps(truth, separators=(",", ":")) + "\n"
