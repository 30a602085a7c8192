import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..cohort.selection import Label
from ..errors import ConfigurationError

INTERVAL_COUNT = 17
LOOKBACK_DAYS = 14
HORIZON_END = 29  # exclusive; offsets up to +28 are in range
OUT_OF_RANGE = -1

# [start, end) in days relative to the anchor; None is the open lower end
DEFAULT_RANGES = (
    (None, -28), (-28, -14), (-14, -7), (-7, 0),
    (0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7),
    (7, 10), (10, 14), (14, 18), (18, 22), (22, 26), (26, 29),
)


class IntervalScheme(object):
    """
    Ordered, contiguous half-open day ranges relative to the anchor day.
    """

    def __init__(self, ranges: Sequence[Sequence[Optional[int]]]) -> None:
        """
        Parameters:
            ranges: Pairs [start, end); the first start is None (open), the last end is 29.

        Raises:
            ConfigurationError: If the ranges are not 17 contiguous intervals covering (-inf, 28].
        """
        ranges = tuple((None if start is None else int(start), int(end)) for start, end in ranges)
        if len(ranges) != INTERVAL_COUNT:
            raise ConfigurationError(f"Interval error: expected {INTERVAL_COUNT} intervals, got {len(ranges)}.")
        if ranges[0][0] is not None:
            raise ConfigurationError("Interval error: the first interval must be open below (start null).")
        if ranges[-1][1] != HORIZON_END:
            raise ConfigurationError(f"Interval error: the last interval must end at {HORIZON_END}.")
        for (_, end), (start, next_end) in zip(ranges, ranges[1:]):
            if start != end:
                raise ConfigurationError(f"Interval error: intervals must be contiguous ({end} != {start}).")
            if next_end <= start:
                raise ConfigurationError(f"Interval error: empty interval [{start}, {next_end}).")
        self._ranges = ranges
        self._ends = np.array([end for _, end in ranges])

    @property
    def ranges(self) -> tuple:
        return self._ranges

    def __len__(self) -> int:
        return len(self._ranges)

    def __eq__(self, other) -> bool:
        return isinstance(other, IntervalScheme) and self._ranges == other._ranges

    @property
    def labels(self) -> list[str]:
        """
        Short names of the intervals, used in column names (e.g. "d-14..-7", "d0", "d26..28").
        """
        labels = []
        for start, end in self._ranges:
            if start is None:
                labels.append(f"d<{end}")
            elif end - start == 1:
                labels.append(f"d{start}")
            else:
                labels.append(f"d{start}..{end - 1}")
        return labels

    def assign(self, offsets) -> np.ndarray:
        """
        Vectorized interval lookup; offsets beyond the horizon map to OUT_OF_RANGE.
        """
        offsets = np.asarray(offsets)
        index = np.searchsorted(self._ends, offsets, side="right")
        return np.where(index < len(self._ranges), index, OUT_OF_RANGE)

    def intersects(self, index: int, lower: float, upper: float) -> bool:
        """
        True iff interval `index` intersects the half-open range [lower, upper).
        """
        start, end = self._ranges[index]
        start = -math.inf if start is None else start
        return start < upper and lower < end


def default_interval_scheme() -> IntervalScheme:
    return IntervalScheme(DEFAULT_RANGES)


def assign_interval(day_offset: int, scheme: IntervalScheme) -> int:
    """
    Index of the interval containing `day_offset`, or OUT_OF_RANGE for offsets past +28.
    """
    return int(scheme.assign(day_offset))


@dataclass(frozen=True)
class PeriodOfInterest:
    """
    Admissible offsets [lower, upper) for acute features of one patient, and the per-interval mask.
    """
    lower: int
    upper: int
    interval_mask: tuple[bool, ...]

    def admits(self, day_offset: int) -> bool:
        return self.lower <= day_offset < self.upper


def period_of_interest(anchor_day: int, label: Label, admission_offset: Optional[int],
                       scheme: IntervalScheme = None, cutoff_shift: int = 0) -> PeriodOfInterest:
    """
    Computes the admissible window: from 14 days before the anchor up to (excluding) the admission day
    for hospitalized patients, up to +28 otherwise.

    Parameters:
        anchor_day (int): Anchor day; offsets are relative to it.
        label (Label): H0 or H1.
        admission_offset (int, optional): Admission offset, required for H1.
        scheme (IntervalScheme, optional): Interval layout, default scheme when omitted.
        cutoff_shift (int): Days removed before the admission for H1 patients (1 for the one-day-before
            scenario).

    Returns:
        PeriodOfInterest: Window and interval mask.

    Raises:
        ValueError: If an H1 patient has no admission offset.
    """
    scheme = scheme or default_interval_scheme()
    if label == Label.H1:
        if admission_offset is None:
            raise ValueError(f"Hospitalized patient (anchor day {anchor_day}) needs an admission offset.")
        upper = min(admission_offset - cutoff_shift, HORIZON_END)
    else:
        upper = HORIZON_END
    mask = tuple(scheme.intersects(i, -LOOKBACK_DAYS, upper) for i in range(len(scheme)))
    return PeriodOfInterest(-LOOKBACK_DAYS, upper, mask)
