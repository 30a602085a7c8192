import logging
from enum import Enum

from ..records.record import RawRecord, RecordKind, CodeSystem, ResultFlag
from .hierarchy import CodeHierarchy
from .patterns import PatternSet

log = logging.getLogger(__name__)

CONFIRMED_CODE = "U07.1"
SUSPECTED_CODE = "U07.2"
SARS_COV_2_TEST = "94500-6"


class EvidenceClass(Enum):
    """
    COVID-19 evidence carried by a single record.
    """
    CONFIRMED = "Confirmed"
    SUSPECTED = "Suspected"
    POSITIVE_TEST = "PositiveTest"
    DISREGARDED = "Disregarded"


def match_hierarchical(concept_id: str, patterns: PatternSet, hierarchy: CodeHierarchy) -> bool:
    """
    Matches a concept through the hierarchy: the concept's own name or the name of any ancestor has to
    match an inclusion pattern, and the concept's own name must not match an exclusion pattern.

    Parameters:
        concept_id (str): Concept to match.
        patterns (PatternSet): Inclusion and exclusion patterns.
        hierarchy (CodeHierarchy): Concept graph.

    Returns:
        bool: Whether the concept matches. Unknown concepts never match.
    """
    name = hierarchy.name(concept_id)
    if name is None:
        log.warning("Unknown concept '%s' in hierarchical match", concept_id)
        return False
    if patterns.excludes(name):
        return False
    if patterns.includes(name):
        return True
    return any(patterns.includes(hierarchy.name(ancestor)) for ancestor in hierarchy.ancestors(concept_id))


def record_matches(record: RawRecord, patterns: PatternSet, hierarchy: CodeHierarchy) -> bool:
    """
    Pattern match of a diagnosis by its description and, for SNOMED codes, through the hierarchy.
    An exclusion hit on the description overrides any inclusion hit.
    """
    if patterns.excludes(record.text):
        return False
    if patterns.includes(record.text):
        return True
    return record.code_system == CodeSystem.SNOMED and record.code in hierarchy \
        and match_hierarchical(record.code, patterns, hierarchy)


def classify_diagnosis(record: RawRecord, patterns: PatternSet, hierarchy: CodeHierarchy) -> EvidenceClass:
    """
    Classifies a diagnosis as COVID-19 evidence. U07.1 and U07.2 are decided by the code alone;
    every other record is Suspected only if its description or concept matches the patterns.

    Parameters:
        record (RawRecord): Diagnosis record.
        patterns (PatternSet): Inclusion and exclusion patterns.
        hierarchy (CodeHierarchy): Concept graph for SNOMED codes.

    Returns:
        EvidenceClass: Confirmed, Suspected or Disregarded.
    """
    if record.code_system == CodeSystem.ICD10:
        if record.code == CONFIRMED_CODE:
            return EvidenceClass.CONFIRMED
        if record.code == SUSPECTED_CODE:
            return EvidenceClass.SUSPECTED
    if record_matches(record, patterns, hierarchy):
        return EvidenceClass.SUSPECTED
    return EvidenceClass.DISREGARDED


def detect_positive_test(record: RawRecord) -> bool:
    """
    True for a positive SARS-CoV-2 test observation.
    """
    return record.kind == RecordKind.OBSERVATION and record.code == SARS_COV_2_TEST \
        and record.result_flag == ResultFlag.POSITIVE
