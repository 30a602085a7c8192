from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Optional

import numpy as np


class Scenario(Enum):
    """
    Feature sets the models are trained on.
    """
    ALL = "all"
    GP = "gp"
    ONE_DAY_BEFORE = "one-day-before"


@dataclass
class FusedFeatures:
    """
    Imputed and normalized modalities of one split.

    X1: n x h tabular features; X2: n x m x t temporal features. The early-fusion matrix is
    [flatten(X2) | X1], where the temporal cell (channel c, interval j) is column c * t + j.
    """
    X1: np.ndarray
    X2: np.ndarray
    mask2: np.ndarray
    source_day2: np.ndarray
    labels: np.ndarray
    patient_ids: list[str]
    admission_offsets: np.ndarray
    tabular_names: list[str]
    channel_names: list[str]
    interval_labels: list[str]
    scenario: Scenario = Scenario.ALL
    split_seed: int = 0
    # records and statistics needed to rebuild rows; not persisted
    source: Optional[Any] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        n = len(self.patient_ids)
        if self.X1.shape != (n, len(self.tabular_names)):
            raise ValueError(f"X1 has shape {self.X1.shape}, expected {(n, len(self.tabular_names))}.")
        expected = (n, len(self.channel_names), len(self.interval_labels))
        for name in ("X2", "mask2", "source_day2"):
            if getattr(self, name).shape != expected:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {expected}.")

    @property
    def n(self) -> int:
        return len(self.patient_ids)

    @property
    def h(self) -> int:
        return self.X1.shape[1]

    @property
    def m(self) -> int:
        return self.X2.shape[1]

    @property
    def t(self) -> int:
        return self.X2.shape[2]

    @property
    def k(self) -> int:
        return self.m * self.t + self.h

    @property
    def X_early(self) -> np.ndarray:
        return np.concatenate([self.X2.reshape(self.n, self.m * self.t), self.X1], axis=1)

    @property
    def y(self) -> np.ndarray:
        return self.labels.astype(np.int64)

    @property
    def feature_names(self) -> list[str]:
        temporal = [f"{channel}[{interval}]" for channel in self.channel_names for interval in self.interval_labels]
        return temporal + list(self.tabular_names)

    def with_values(self, **changes) -> "FusedFeatures":
        return replace(self, **changes)


def unflatten_temporal(X_early: np.ndarray, m: int, t: int) -> np.ndarray:
    """
    Recovers the n x m x t temporal tensor from the first m * t early-fusion columns.
    """
    return X_early[:, : m * t].reshape(len(X_early), m, t)


def count_leakage_violations(features: FusedFeatures) -> int:
    """
    Number of observed temporal cells of hospitalized rows sourced on or after the admission day.
    """
    hospitalized = features.labels.astype(bool)
    if not hospitalized.any():
        return 0
    admission = features.admission_offsets[hospitalized][:, None, None]
    observed = features.mask2[hospitalized]
    return int((observed & (features.source_day2[hospitalized] >= admission)).sum())
