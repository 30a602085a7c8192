import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

from ..errors import ConfigurationError
from ..records.record import RawRecord, RecordKind, EncounterType
from ..records.store import RecordStore
from .evidence import EvidenceClass, classify_diagnosis, detect_positive_test
from .hierarchy import CodeHierarchy
from .patterns import PatternSet

log = logging.getLogger(__name__)

QUALIFYING_ENCOUNTERS = (EncounterType.INPATIENT, EncounterType.EMERGENCY_ROOM, EncounterType.HOSPITAL_ENCOUNTER)


class Label(Enum):
    H0 = "H0"
    H1 = "H1"


class LabelStatus(Enum):
    EXCLUDED_PRIOR_HOSP = "ExcludedPriorHosp"
    H1 = "H1"
    H0 = "H0"


@dataclass(frozen=True)
class CohortRules:
    """
    Day windows of the cohort definition; all windows are inclusive on both ends.
    """
    test_window_days: int = 28
    prior_window_days: int = 28
    followup_days: int = 28
    min_duration_hours: float = 24.0

    def __post_init__(self):
        for name in ("test_window_days", "prior_window_days", "followup_days"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"Cohort error: '{name}' must be nonnegative.")


@dataclass(frozen=True)
class HospitalizationOutcome:
    status: LabelStatus
    admission_offset: Optional[int] = None


@dataclass(frozen=True)
class CohortEntry:
    """
    A selected and labelled patient.
    """
    patient_id: str
    anchor_day: int
    label: Label
    admission_offset: Optional[int]
    diagnosis_class: EvidenceClass
    has_positive_test: bool = True

    def __post_init__(self):
        if (self.label == Label.H1) != (self.admission_offset is not None):
            raise ValueError(f"Cohort entry {self.patient_id}: admission_offset must be present iff the label is H1.")

    @property
    def hospitalized(self) -> bool:
        return self.label == Label.H1

    def as_dict(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "anchor_day": self.anchor_day,
            "label": self.label.value,
            "admission_offset": self.admission_offset,
            "diagnosis_class": self.diagnosis_class.value,
            "has_positive_test": self.has_positive_test,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CohortEntry":
        return cls(
            patient_id=data["patient_id"],
            anchor_day=data["anchor_day"],
            label=Label(data["label"]),
            admission_offset=data.get("admission_offset"),
            diagnosis_class=EvidenceClass(data["diagnosis_class"]),
            has_positive_test=data.get("has_positive_test", True),
        )


def _covid_evidence(timeline: Sequence[RawRecord], patterns: PatternSet, hierarchy: CodeHierarchy):
    anchor_day = None
    best = None
    test_days = []
    for record in timeline:
        if record.kind == RecordKind.DIAGNOSIS:
            evidence = classify_diagnosis(record, patterns, hierarchy)
            if evidence in (EvidenceClass.CONFIRMED, EvidenceClass.SUSPECTED):
                anchor_day = record.day if anchor_day is None else min(anchor_day, record.day)
                if best != EvidenceClass.CONFIRMED:
                    best = evidence
        elif detect_positive_test(record):
            test_days.append(record.day)
    return anchor_day, best, test_days


def select_cohort(store: RecordStore, patterns: PatternSet, hierarchy: CodeHierarchy,
                  rules: CohortRules = CohortRules()) -> list[tuple[str, int]]:
    """
    Selects patients with a Confirmed or Suspected COVID-19 diagnosis and a positive test within the
    test window around the earliest such diagnosis (the anchor day).

    Parameters:
        store (RecordStore): Ingested records.
        patterns (PatternSet): Diagnosis patterns.
        hierarchy (CodeHierarchy): Concept graph.
        rules (CohortRules): Windows.

    Returns:
        list[tuple[str, int]]: (patient_id, anchor_day) in store order.
    """
    return [(patient_id, anchor_day) for patient_id, anchor_day, _ in _select(store, patterns, hierarchy, rules)]


def _select(store, patterns, hierarchy, rules):
    for patient_id in store.patient_ids:
        anchor_day, best, test_days = _covid_evidence(store.timeline(patient_id), patterns, hierarchy)
        if anchor_day is None:
            continue
        if any(abs(day - anchor_day) <= rules.test_window_days for day in test_days):
            yield patient_id, anchor_day, best


def _qualifies(record: RawRecord, rules: CohortRules) -> bool:
    return record.kind == RecordKind.ENCOUNTER and record.encounter_type in QUALIFYING_ENCOUNTERS \
        and record.duration_hours > rules.min_duration_hours


def label_hospitalization(timeline: Iterable[RawRecord], anchor_day: int,
                          rules: CohortRules = CohortRules()) -> HospitalizationOutcome:
    """
    Labels a patient from encounters: a qualifying admission before the anchor (within the prior window)
    excludes the patient, one in [anchor, anchor + follow-up] makes the patient H1.

    Parameters:
        timeline (Iterable[RawRecord]): Patient events.
        anchor_day (int): Day of the earliest COVID-19 diagnosis.
        rules (CohortRules): Windows and the minimum stay.

    Returns:
        HospitalizationOutcome: Status and, for H1, the offset of the earliest qualifying admission.
    """
    offsets = [record.day - anchor_day for record in timeline if _qualifies(record, rules)]
    if any(-rules.prior_window_days <= offset <= -1 for offset in offsets):
        return HospitalizationOutcome(LabelStatus.EXCLUDED_PRIOR_HOSP)
    after = [offset for offset in offsets if 0 <= offset <= rules.followup_days]
    if after:
        return HospitalizationOutcome(LabelStatus.H1, min(after))
    return HospitalizationOutcome(LabelStatus.H0)


def build_cohort(store: RecordStore, patterns: PatternSet, hierarchy: CodeHierarchy,
                 rules: CohortRules = CohortRules()) -> list[CohortEntry]:
    """
    Selects and labels the cohort; patients hospitalized shortly before their diagnosis are dropped.

    Returns:
        list[CohortEntry]: Cohort in store order.
    """
    cohort = []
    excluded = 0
    for patient_id, anchor_day, best in _select(store, patterns, hierarchy, rules):
        outcome = label_hospitalization(store.timeline(patient_id), anchor_day, rules)
        if outcome.status == LabelStatus.EXCLUDED_PRIOR_HOSP:
            excluded += 1
            continue
        label = Label.H1 if outcome.status == LabelStatus.H1 else Label.H0
        cohort.append(CohortEntry(patient_id, anchor_day, label, outcome.admission_offset, best, True))

    hospitalized = sum(entry.hospitalized for entry in cohort)
    log.info(
        "Cohort: %d of %d patients selected, %d excluded for prior hospitalization, %d H1 / %d H0",
        len(cohort) + excluded, len(store), excluded, hospitalized, len(cohort) - hospitalized,
    )
    return cohort


def write_cohort(cohort: Iterable[CohortEntry], path: Union[str, Path]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for entry in cohort:
            f.write(json.dumps(entry.as_dict(), separators=(",", ":")))
            f.write("\n")


def read_cohort(path: Union[str, Path]) -> list[CohortEntry]:
    with open(path, encoding="utf-8") as f:
        return [CohortEntry.from_dict(json.loads(line)) for line in f if line.strip()]
