from pathlib import Path

from components.records.record import (
    RawRecord, RecordKind, CodeSystem, ResultFlag, EncounterType,
)

PATTERN_DIR = Path(__file__).resolve().parents[1] / "source" / "components" / "patterns"


def demographic(patient_id: str, code: str) -> RawRecord:
    return RawRecord(patient_id, RecordKind.DEMOGRAPHIC, code=code)


def diagnosis(patient_id: str, day: int, code: str = "", text: str = "",
              system: CodeSystem = CodeSystem.ICD10) -> RawRecord:
    return RawRecord(patient_id, RecordKind.DIAGNOSIS, day=day, code_system=system, code=code, text=text)


def covid_test(patient_id: str, day: int, positive: bool = True) -> RawRecord:
    flag = ResultFlag.POSITIVE if positive else ResultFlag.NEGATIVE
    return RawRecord(patient_id, RecordKind.OBSERVATION, day=day, code_system=CodeSystem.LOINC,
                     code="94500-6", text="SARS-CoV-2 RNA", result_flag=flag)


def lab(patient_id: str, day: int, loinc: str, value: float) -> RawRecord:
    return RawRecord(patient_id, RecordKind.OBSERVATION, day=day, code_system=CodeSystem.LOINC,
                     code=loinc, value=value)


def encounter(patient_id: str, day: int, hours: float,
              kind: EncounterType = EncounterType.INPATIENT) -> RawRecord:
    return RawRecord(patient_id, RecordKind.ENCOUNTER, day=day, encounter_type=kind, duration_hours=hours)
