import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..cohort.hierarchy import CodeHierarchy
from ..cohort.selection import CohortEntry
from ..records.store import RecordStore
from .builder import (
    RawFeatures, SplitConfig, build_raw_features, drop_unusable_rows, split_rows,
)
from .fused import FusedFeatures, Scenario
from .intervals import IntervalScheme
from .spec import FeatureSpec

log = logging.getLogger(__name__)


@dataclass
class NormalizationStats:
    """
    Training-split statistics of the continuous (temporal) columns, in early-fusion order.
    Columns that are constant or never observed in training are zeroed instead of normalized.
    """
    median: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    constant_columns: np.ndarray

    @classmethod
    def fit(cls, temporal: np.ndarray) -> "NormalizationStats":
        """
        Parameters:
            temporal (np.ndarray): Training rows, n x m x t with NaN for missing cells.
        """
        flat = temporal.reshape(len(temporal), -1)
        observed = ~np.isnan(flat)
        never_observed = ~observed.any(axis=0)
        median = np.zeros(flat.shape[1])
        if (~never_observed).any():
            median[~never_observed] = np.nanmedian(flat[:, ~never_observed], axis=0)
        imputed = np.where(observed, flat, median)
        mean = imputed.mean(axis=0)
        std = imputed.std(axis=0)
        constant = never_observed | (std <= 1e-12 * np.maximum(1.0, np.abs(mean)))
        if constant.any():
            log.warning("%d of %d continuous columns are constant on the training split and are zeroed",
                        int(constant.sum()), len(constant))
        std = np.where(constant, 1.0, std)
        return cls(median, mean, std, np.flatnonzero(constant))

    def impute(self, flat: np.ndarray) -> np.ndarray:
        return np.where(np.isnan(flat), self.median, flat)

    def transform(self, temporal: np.ndarray) -> np.ndarray:
        """
        Imputes and z-normalizes a temporal tensor; constant columns become 0.
        """
        n = len(temporal)
        flat = (self.impute(temporal.reshape(n, -1)) - self.mean) / self.std
        flat[:, self.constant_columns] = 0.0
        return flat.reshape(temporal.shape)


@dataclass
class FeatureSource:
    """
    Everything needed to rebuild feature rows of a split (used by the one-day-before scenario).
    """
    cohort: dict[str, CohortEntry]
    store: RecordStore = field(repr=False)
    spec: FeatureSpec = field(repr=False)
    scheme: IntervalScheme = field(repr=False)
    hierarchy: Optional[CodeHierarchy] = field(repr=False)
    stats: NormalizationStats = field(repr=False)


def assemble(raw: RawFeatures, stats: NormalizationStats, scenario: Scenario = Scenario.ALL,
             split_seed: int = 0, source: FeatureSource = None) -> FusedFeatures:
    """
    Imputes (Booleans are already false when absent) and normalizes raw features with given statistics.
    """
    return FusedFeatures(
        X1=raw.tabular.copy(),
        X2=stats.transform(raw.temporal),
        mask2=~np.isnan(raw.temporal),
        source_day2=raw.source_day.copy(),
        labels=raw.labels.copy(),
        patient_ids=list(raw.patient_ids),
        admission_offsets=raw.admission_offsets.copy(),
        tabular_names=raw.spec.tabular_names,
        channel_names=raw.spec.channel_names,
        interval_labels=raw.scheme.labels,
        scenario=scenario,
        split_seed=split_seed,
        source=source,
    )


def fit_transform(cohort: Sequence[CohortEntry], store: RecordStore, spec: FeatureSpec, scheme: IntervalScheme,
                  split: SplitConfig, hierarchy: Optional[CodeHierarchy] = None,
                  raw: Optional[RawFeatures] = None) -> tuple[FusedFeatures, FusedFeatures, NormalizationStats]:
    """
    Builds the features of a cohort, splits the rows, learns the imputation and normalization
    statistics on the training rows and applies them to both splits.

    Parameters:
        cohort: Cohort entries.
        store (RecordStore): Records.
        spec (FeatureSpec): Feature definitions.
        scheme (IntervalScheme): Interval layout.
        split (SplitConfig): Train fraction, seed and stratification.
        hierarchy (CodeHierarchy, optional): Concept graph.
        raw (RawFeatures, optional): Already built raw features of the same cohort (reused across seeds).

    Returns:
        tuple: Train features, test features, statistics.

    Raises:
        ValueError: If no usable row remains.
    """
    if raw is None:
        raw = build_raw_features(cohort, store, spec, scheme, hierarchy)
    raw = drop_unusable_rows(raw)
    if len(raw) == 0:
        raise ValueError("Empty cohort: no patient with age information and features.")

    train_rows, test_rows = split_rows(raw, split)
    train, test = raw.take(train_rows), raw.take(test_rows)
    stats = NormalizationStats.fit(train.temporal)
    source = FeatureSource({entry.patient_id: entry for entry in cohort}, store, spec, scheme, hierarchy, stats)
    log.info("Split seed %d: %d train rows, %d test rows (k = %d)",
             split.seed, len(train), len(test), spec.m * len(scheme) + spec.h)
    return (assemble(train, stats, Scenario.ALL, split.seed, source),
            assemble(test, stats, Scenario.ALL, split.seed, source),
            stats)
