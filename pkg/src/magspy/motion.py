"""Gyroscope-based movement metrics and threshold filtering of disturbed traces."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .traces import SensorRecording

#: Defaults calibrated on simulated hand-held jitter (rad/s).
DEFAULT_MEAN_THRESHOLD = 0.05
DEFAULT_MAX_THRESHOLD = 0.5


@dataclass(frozen=True)
class MotionMetrics:
    """Mean and maximum Euclidean rotation-rate magnitude over a window, rad/s."""

    mean_rate: float
    max_rate: float

    def __post_init__(self):
        if not 0.0 <= self.mean_rate <= self.max_rate:
            raise ValueError("need 0 <= mean_rate <= max_rate")


@dataclass(frozen=True)
class MotionThresholds:
    mean_threshold: float = DEFAULT_MEAN_THRESHOLD
    max_threshold: float = DEFAULT_MAX_THRESHOLD

    def __post_init__(self):
        if self.mean_threshold < 0 or self.max_threshold < 0:
            raise ValueError("thresholds must be non-negative")


class FilterResult(NamedTuple):
    kept: tuple[SensorRecording, ...]
    rejected: tuple[SensorRecording, ...]
    rejected_fraction: float
    no_gyro_count: int


def motion_metrics(gyro) -> MotionMetrics:
    """Reduce 3-axis rotation rates to (mean magnitude, max magnitude)."""
    g = np.asarray(gyro, dtype=np.float64)
    if g.ndim != 2 or g.shape[1] != 3 or g.shape[0] == 0:
        raise ValueError("gyro must be a non-empty sequence of 3-axis samples")
    magnitude = np.sqrt((g * g).sum(axis=1))
    return MotionMetrics(mean_rate=float(magnitude.mean()),
                         max_rate=float(magnitude.max()))


def is_disturbed(metrics: MotionMetrics, thresholds: MotionThresholds) -> bool:
    """True when either the mean or the max rotation rate exceeds its threshold."""
    return (metrics.mean_rate > thresholds.mean_threshold
            or metrics.max_rate > thresholds.max_threshold)


def filter_dataset(recordings, thresholds: MotionThresholds) -> FilterResult:
    """Partition recordings into (kept, rejected) by the movement criteria.

    Recordings without gyroscope data cannot be assessed; they are kept and
    counted in ``no_gyro_count``. The rejected fraction is relative to all
    recordings. Order is preserved within each part.
    """
    kept: list[SensorRecording] = []
    rejected: list[SensorRecording] = []
    no_gyro = 0
    for rec in recordings:
        if rec.gyro is None:
            no_gyro += 1
            kept.append(rec)
        elif is_disturbed(motion_metrics(rec.gyro), thresholds):
            rejected.append(rec)
        else:
            kept.append(rec)
    total = len(kept) + len(rejected)
    fraction = len(rejected) / total if total else 0.0
    return FilterResult(tuple(kept), tuple(rejected), fraction, no_gyro)
