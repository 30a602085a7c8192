import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from sklearn.model_selection import train_test_split

from ..cohort.hierarchy import CodeHierarchy
from ..cohort.selection import CohortEntry
from ..records.record import RecordKind
from ..records.store import RecordStore
from .aggregate import aggregate_boolean, aggregate_observation
from .intervals import IntervalScheme, LOOKBACK_DAYS, HORIZON_END, period_of_interest
from .spec import AGGREGATES, AGE_BINS, GENDER_COLUMN, FeatureSpec, age_bin

log = logging.getLogger(__name__)

MISSING_DAY = np.iinfo(np.int32).min
NO_ADMISSION = -1


@dataclass
class RawFeatures:
    """
    Features before imputation and normalization. Missing temporal cells are NaN and their
    source day is MISSING_DAY; source days are offsets from the anchor.
    """
    patient_ids: list[str]
    labels: np.ndarray
    admission_offsets: np.ndarray
    tabular: np.ndarray
    temporal: np.ndarray
    source_day: np.ndarray
    age_known: np.ndarray
    spec: FeatureSpec = field(repr=False)
    scheme: IntervalScheme = field(repr=False)

    def __len__(self) -> int:
        return len(self.patient_ids)

    @property
    def empty_rows(self) -> np.ndarray:
        """
        Rows without any condition and without any measurement (age and gender do not count).
        """
        conditions = len(self.spec.conditions)
        return ~self.tabular[:, :conditions].any(axis=1) & np.isnan(self.temporal).all(axis=(1, 2))

    def take(self, rows) -> "RawFeatures":
        rows = np.asarray(rows)
        return RawFeatures(
            patient_ids=[self.patient_ids[i] for i in rows],
            labels=self.labels[rows],
            admission_offsets=self.admission_offsets[rows],
            tabular=self.tabular[rows],
            temporal=self.temporal[rows],
            source_day=self.source_day[rows],
            age_known=self.age_known[rows],
            spec=self.spec,
            scheme=self.scheme,
        )


def _interval_lookup(scheme: IntervalScheme) -> dict[int, int]:
    # admissible offsets never leave [-14, 28]
    offsets = np.arange(-LOOKBACK_DAYS, HORIZON_END)
    return dict(zip(offsets.tolist(), scheme.assign(offsets).tolist()))


def build_raw_features(cohort: Sequence[CohortEntry], store: RecordStore, spec: FeatureSpec,
                       scheme: IntervalScheme, hierarchy: Optional[CodeHierarchy] = None,
                       cutoff_shift: int = 0) -> RawFeatures:
    """
    Aggregates every cohort patient's timeline into tabular and temporal features.

    Parameters:
        cohort: Selected and labelled patients.
        store (RecordStore): Records of those patients.
        spec (FeatureSpec): Conditions and quantities.
        scheme (IntervalScheme): Interval layout.
        hierarchy (CodeHierarchy, optional): Concept graph for SNOMED-coded diagnoses.
        cutoff_shift (int): Days cut before the admission of hospitalized patients.

    Returns:
        RawFeatures: One row per cohort entry, in cohort order.
    """
    hierarchy = hierarchy or CodeHierarchy({}, [])
    n, h, m, t = len(cohort), spec.h, spec.m, len(scheme)
    conditions = spec.conditions
    age_offset = len(conditions)
    age_columns = {name: age_offset + i for i, name in enumerate(AGE_BINS)}
    gender_column = spec.tabular_names.index(GENDER_COLUMN)
    lookup = _interval_lookup(scheme)
    aggregates = len(AGGREGATES)

    tabular = np.zeros((n, h))
    temporal = np.full((n, m, t), np.nan)
    source_day = np.full((n, m, t), MISSING_DAY, dtype=np.int32)
    labels = np.zeros(n, dtype=bool)
    admission_offsets = np.full(n, NO_ADMISSION, dtype=np.int32)
    age_known = np.zeros(n, dtype=bool)

    for row, entry in enumerate(cohort):
        timeline = store.timeline(entry.patient_id)
        period = period_of_interest(entry.anchor_day, entry.label, entry.admission_offset, scheme, cutoff_shift)
        labels[row] = entry.hospitalized
        if entry.hospitalized:
            admission_offsets[row] = entry.admission_offset

        diagnoses = [record for record in timeline if record.kind == RecordKind.DIAGNOSIS]
        for column, condition in enumerate(conditions):
            tabular[row, column] = aggregate_boolean(diagnoses, condition, period, entry.anchor_day, hierarchy)

        age = None
        for record in timeline:
            if record.kind != RecordKind.DEMOGRAPHIC:
                break
            if record.age_years is not None:
                age = record.age_years
            elif record.gender == "M":
                tabular[row, gender_column] = 1.0
        tabular[row, age_columns[age_bin(age)]] = 1.0
        age_known[row] = age is not None

        cells: dict[tuple[int, int], list[tuple[int, float]]] = {}
        for record in timeline:
            if record.kind != RecordKind.OBSERVATION or record.value is None:
                continue
            quantity = spec.quantity_index(record.code)
            offset = record.day - entry.anchor_day
            if quantity < 0 or not period.admits(offset):
                continue
            cells.setdefault((quantity, lookup[offset]), []).append((offset, record.value))

        for (quantity, interval), values in cells.items():
            channels = slice(aggregates * quantity, aggregates * (quantity + 1))
            temporal[row, channels, interval] = aggregate_observation(values).as_tuple()
            source_day[row, channels, interval] = max(offset for offset, _ in values)

    return RawFeatures(list(entry.patient_id for entry in cohort), labels, admission_offsets,
                       tabular, temporal, source_day, age_known, spec, scheme)


@dataclass(frozen=True)
class SplitConfig:
    seed: int
    train_fraction: float = 0.7
    stratified: bool = False


def drop_unusable_rows(raw: RawFeatures) -> RawFeatures:
    """
    Removes patients without age information and patients without any feature.
    """
    keep = raw.age_known & ~raw.empty_rows
    dropped_age = int((~raw.age_known).sum())
    dropped_empty = int((raw.age_known & raw.empty_rows).sum())
    if dropped_age or dropped_empty:
        log.info("Dropped %d rows without age and %d rows without features", dropped_age, dropped_empty)
    return raw.take(np.flatnonzero(keep))


def split_rows(raw: RawFeatures, split: SplitConfig) -> tuple[np.ndarray, np.ndarray]:
    """
    Random train/test row split; label stratification is optional.

    Returns:
        tuple[np.ndarray, np.ndarray]: Sorted train and test row indices.
    """
    rows = np.arange(len(raw))
    stratify = raw.labels if split.stratified else None
    train, test = train_test_split(rows, train_size=split.train_fraction, random_state=split.seed,
                                   shuffle=True, stratify=stratify)
    return np.sort(train), np.sort(test)
