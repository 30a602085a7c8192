from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from ..cohort.hierarchy import CodeHierarchy
from ..records.record import RawRecord, RecordKind
from .intervals import PeriodOfInterest
from .spec import ConditionSpec


@dataclass(frozen=True)
class ObservationAggregate:
    last: float
    min: float
    max: float
    mean: float

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.last, self.min, self.max, self.mean)


def aggregate_observation(values: Sequence[tuple[int, float]]) -> Optional[ObservationAggregate]:
    """
    Aggregates the admissible values of one quantity inside one interval.

    Parameters:
        values: (day_offset, value) pairs in timeline order, so equal days keep ingestion order.

    Returns:
        ObservationAggregate | None: None when there are no values.
    """
    if not values:
        return None
    last_day, last = values[0]
    for day, value in values[1:]:
        if day >= last_day:
            last_day, last = day, value
    numbers = [value for _, value in values]
    return ObservationAggregate(last, min(numbers), max(numbers), sum(numbers) / len(numbers))


def aggregate_boolean(timeline: Iterable[RawRecord], condition: ConditionSpec, period: PeriodOfInterest,
                      anchor_day: int, hierarchy: CodeHierarchy) -> bool:
    """
    OR over the matching diagnoses the condition's scope admits.

    Parameters:
        timeline: Patient events.
        condition (ConditionSpec): Condition definition.
        period (PeriodOfInterest): Window of the patient.
        anchor_day (int): Day the offsets are relative to.
        hierarchy (CodeHierarchy): Concept graph for SNOMED-coded diagnoses.

    Returns:
        bool: Whether any admissible event matches.
    """
    for record in timeline:
        if record.kind != RecordKind.DIAGNOSIS:
            continue
        if condition.admits(record.day - anchor_day, period.lower, period.upper) and condition.matches(record, hierarchy):
            return True
    return False
