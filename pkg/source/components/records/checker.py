import math
import re

from ..errors import MalformedRecordError
from .record import (
    RawRecord, RecordKind, CodeSystem, ResultFlag, EncounterType,
    RECORD_KEYS, AGE_PREFIX, GENDER_PREFIX,
)

required_keys = ["patient_id", "kind"]
demographic_code = re.compile(rf"^(?:{AGE_PREFIX}\d+|{GENDER_PREFIX}[FMU])$")


def _enum_value(enum_type, data: dict, key: str):
    value = data.get(key)
    if value is None:
        return None
    try:
        return enum_type(value)
    except ValueError:
        allowed = ", ".join(member.value for member in enum_type)
        raise MalformedRecordError(f"Record error: '{key}' must be one of {allowed}.")


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and math.isfinite(value)


def check_record(data: dict) -> RawRecord:
    """
    Validates a decoded interchange line and builds the record it describes.

    Parameters:
        data (dict): Decoded JSON object of one line.

    Returns:
        RawRecord: The validated record.

    Raises:
        MalformedRecordError: If keys are unknown or missing, a field has the wrong type or a kind-specific
            invariant does not hold.
    """
    if not isinstance(data, dict):
        raise MalformedRecordError("Record error: a record must be an object.")
    unknown = set(data.keys()) - set(RECORD_KEYS)
    if unknown:
        raise MalformedRecordError(f"Record error: unknown keys {sorted(unknown)}.")
    if not all(key in data for key in required_keys):
        raise MalformedRecordError("Record error: 'patient_id' and 'kind' are required.")

    if not isinstance(data["patient_id"], str) or not data["patient_id"]:
        raise MalformedRecordError("Record error: 'patient_id' must be a non-empty string.")
    kind = _enum_value(RecordKind, data, "kind")
    code_system = _enum_value(CodeSystem, data, "code_system") or CodeSystem.NONE
    if not isinstance(data.get("code", ""), str):
        raise MalformedRecordError("Record error: 'code' must be a string.")
    if not isinstance(data.get("text", ""), str):
        raise MalformedRecordError("Record error: 'text' must be a string.")
    if data.get("unit") is not None and not isinstance(data["unit"], str):
        raise MalformedRecordError("Record error: 'unit' must be a string.")

    day = data.get("day")
    if kind == RecordKind.DEMOGRAPHIC:
        if day is not None:
            raise MalformedRecordError("Record error: demographics carry no 'day'.")
        if not demographic_code.match(data.get("code", "")):
            raise MalformedRecordError("Record error: demographic 'code' must be age_years:<int> or gender:<F|M|U>.")
    elif not isinstance(day, int) or isinstance(day, bool):
        raise MalformedRecordError("Record error: 'day' must be an integer.")

    value = data.get("value")
    if value is not None and not _is_number(value):
        raise MalformedRecordError("Record error: 'value' must be a finite number.")
    result_flag = _enum_value(ResultFlag, data, "result_flag")
    if kind == RecordKind.OBSERVATION:
        if code_system != CodeSystem.LOINC:
            raise MalformedRecordError("Record error: observations must use LOINC codes.")
        if (value is None) == (result_flag is None):
            raise MalformedRecordError("Record error: an observation carries exactly one of 'value' and 'result_flag'.")

    encounter_type = _enum_value(EncounterType, data, "encounter_type")
    duration = data.get("duration_hours")
    if duration is not None and (not _is_number(duration) or duration < 0):
        raise MalformedRecordError("Record error: 'duration_hours' must be a finite nonnegative number.")
    if kind == RecordKind.ENCOUNTER and (encounter_type is None or duration is None):
        raise MalformedRecordError("Record error: encounters need 'encounter_type' and 'duration_hours'.")

    return RawRecord(
        patient_id=data["patient_id"],
        kind=kind,
        day=day,
        code_system=code_system,
        code=data.get("code", ""),
        text=data.get("text", ""),
        value=float(value) if value is not None else None,
        unit=data.get("unit"),
        result_flag=result_flag,
        encounter_type=encounter_type,
        duration_hours=float(duration) if duration is not None else None,
    )


def is_valid_record(data: dict) -> bool:
    """
    Checks whether a decoded line describes a valid record.

    Parameters:
        data (dict): Decoded JSON object.

    Returns:
        bool: True if `check_record` accepts it.
    """
    try:
        check_record(data)
    except MalformedRecordError:
        return False
    return True
