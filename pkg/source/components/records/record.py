from dataclasses import dataclass
from enum import Enum
from typing import Optional


class RecordKind(Enum):
    """
    Kinds of EHR events.
    """
    DEMOGRAPHIC = "Demographic"
    DIAGNOSIS = "Diagnosis"
    OBSERVATION = "Observation"
    ENCOUNTER = "Encounter"


class CodeSystem(Enum):
    """
    Coding systems a record code may belong to.
    """
    ICD10 = "ICD10"
    SNOMED = "SNOMED"
    LOINC = "LOINC"
    NONE = "None"


class ResultFlag(Enum):
    POSITIVE = "Positive"
    NEGATIVE = "Negative"
    UNKNOWN = "Unknown"


class EncounterType(Enum):
    INPATIENT = "Inpatient"
    EMERGENCY_ROOM = "HospitalEmergencyRoomVisit"
    HOSPITAL_ENCOUNTER = "HospitalEncounter"
    OTHER = "Other"


# Canonical key order of the interchange format
RECORD_KEYS = (
    "patient_id", "kind", "day", "code_system", "code", "text", "value",
    "unit", "result_flag", "encounter_type", "duration_hours",
)

AGE_PREFIX = "age_years:"
GENDER_PREFIX = "gender:"


@dataclass(frozen=True)
class RawRecord:
    """
    One EHR event. Days are integer offsets from an arbitrary epoch; demographics carry no day.
    """
    patient_id: str
    kind: RecordKind
    day: Optional[int] = None
    code_system: CodeSystem = CodeSystem.NONE
    code: str = ""
    text: str = ""
    value: Optional[float] = None
    unit: Optional[str] = None
    result_flag: Optional[ResultFlag] = None
    encounter_type: Optional[EncounterType] = None
    duration_hours: Optional[float] = None

    @property
    def dedup_key(self) -> tuple:
        """
        Identity used to drop duplicated events at ingestion.
        """
        return (self.patient_id, self.kind, self.day, self.code, self.value)

    @property
    def age_years(self) -> Optional[int]:
        """
        Age carried by an age demographic, None for any other record.
        """
        if self.kind == RecordKind.DEMOGRAPHIC and self.code.startswith(AGE_PREFIX):
            return int(self.code[len(AGE_PREFIX):])
        return None

    @property
    def gender(self) -> Optional[str]:
        """
        Gender letter (F, M, U) carried by a gender demographic, None for any other record.
        """
        if self.kind == RecordKind.DEMOGRAPHIC and self.code.startswith(GENDER_PREFIX):
            return self.code[len(GENDER_PREFIX):]
        return None

    def as_dict(self) -> dict:
        """
        Converts the record to its interchange dictionary with canonical key order.
        Absent optional fields are omitted.

        Returns:
            dict: Interchange representation.
        """
        data = {
            "patient_id": self.patient_id,
            "kind": self.kind.value,
            "day": self.day,
            "code_system": self.code_system.value,
            "code": self.code,
            "text": self.text,
            "value": self.value,
            "unit": self.unit,
            "result_flag": self.result_flag.value if self.result_flag else None,
            "encounter_type": self.encounter_type.value if self.encounter_type else None,
            "duration_hours": self.duration_hours,
        }
        return {key: data[key] for key in RECORD_KEYS if data[key] is not None}
