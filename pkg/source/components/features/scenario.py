import logging
from typing import Union

import numpy as np

from .builder import build_raw_features
from .fused import FusedFeatures, Scenario

log = logging.getLogger(__name__)


def _drop_gp_features(features: FusedFeatures, excluded_tabular: set[str], excluded_quantities: set[str]) -> FusedFeatures:
    keep_tabular = [i for i, name in enumerate(features.tabular_names) if name not in excluded_tabular]
    keep_channels = [i for i, name in enumerate(features.channel_names)
                     if name.rsplit("_", 1)[0] not in excluded_quantities]
    return features.with_values(
        X1=features.X1[:, keep_tabular],
        X2=features.X2[:, keep_channels],
        mask2=features.mask2[:, keep_channels],
        source_day2=features.source_day2[:, keep_channels],
        tabular_names=[features.tabular_names[i] for i in keep_tabular],
        channel_names=[features.channel_names[i] for i in keep_channels],
        scenario=Scenario.GP,
    )


def _one_day_before(features: FusedFeatures) -> FusedFeatures:
    source = features.source
    if source is None:
        raise ValueError("The one-day-before scenario needs features built from records (no record source attached).")
    hospitalized = np.flatnonzero(features.labels)
    if len(hospitalized) == 0:
        return features.with_values(scenario=Scenario.ONE_DAY_BEFORE)

    entries = [source.cohort[features.patient_ids[row]] for row in hospitalized]
    raw = build_raw_features(entries, source.store, source.spec, source.scheme, source.hierarchy, cutoff_shift=1)
    if raw.tabular.shape[1] != features.h or raw.temporal.shape[1] != features.m:
        raise ValueError("The one-day-before scenario must be applied before any columns are dropped.")

    X1, X2 = features.X1.copy(), features.X2.copy()
    mask2, source_day2 = features.mask2.copy(), features.source_day2.copy()
    X1[hospitalized] = raw.tabular
    X2[hospitalized] = source.stats.transform(raw.temporal)
    mask2[hospitalized] = ~np.isnan(raw.temporal)
    source_day2[hospitalized] = raw.source_day
    blanked = int(features.mask2[hospitalized].sum() - mask2[hospitalized].sum())
    log.info("One day before admission: %d temporal cells of %d hospitalized rows blanked", blanked, len(hospitalized))
    return features.with_values(X1=X1, X2=X2, mask2=mask2, source_day2=source_day2, scenario=Scenario.ONE_DAY_BEFORE)


def apply_scenario(features: FusedFeatures, scenario: Union[Scenario, str]) -> FusedFeatures:
    """
    Derives the feature set of a training scenario.

    ALL keeps everything. GP drops the conditions and laboratory quantities flagged as unavailable to a
    general practitioner (all aggregates in all intervals). ONE_DAY_BEFORE rebuilds hospitalized rows
    without any event from the day before the admission onwards, re-imputing with the training statistics.

    Parameters:
        features (FusedFeatures): Features of the ALL scenario.
        scenario (Scenario | str): Target scenario.

    Returns:
        FusedFeatures: New features; the input is not modified.

    Raises:
        ValueError: If the scenario is unknown or cannot be derived from these features.
    """
    scenario = Scenario(scenario)
    if scenario == Scenario.ALL:
        return features
    if scenario == Scenario.GP:
        if features.source is None:
            raise ValueError("The GP scenario needs the feature definitions (no record source attached).")
        spec = features.source.spec
        quantities = {quantity.name for quantity in spec.quantities if quantity.gp_excluded}
        return _drop_gp_features(features, set(spec.gp_excluded_tabular), quantities)
    return _one_day_before(features)

