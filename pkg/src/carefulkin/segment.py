"""Velocity-peak segmentation of a trial into reach, transport and depart."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import find_peaks

from .errors import ParameterError, SegmentationError
from .signal import UniformSeries


@dataclass(frozen=True)
class SegmentConfig:
    threshold_fraction: float = 0.05
    min_prominence: float = 0.10  # fraction of the global maximum
    min_separation: float = 0.25  # seconds
    filter_order: int = 4
    filter_cutoff: float = 5.0


@dataclass(frozen=True)
class PhaseSegmentation:
    """Inclusive frame ranges ``(start, end)`` for each phase."""

    reach: tuple[int, int]
    transport: tuple[int, int]
    depart: tuple[int, int]
    peak_indices: tuple[int, int, int]
    threshold_value: float

    def transport_slice(self) -> slice:
        return slice(self.transport[0], self.transport[1] + 1)


def velocity_norm(positions: UniformSeries) -> UniformSeries:
    """Speed per frame from central differences (one-sided at the ends)."""
    if positions.frames < 2:
        raise ParameterError("velocity needs at least two frames")
    vel = np.gradient(positions.data, 1.0 / positions.rate, axis=0)
    return UniformSeries(positions.rate, np.linalg.norm(vel, axis=1))


def find_phase_peaks(v: np.ndarray, rate: float, config: SegmentConfig = SegmentConfig()) -> np.ndarray:
    """Frame indices of the three dominant peaks, in temporal order."""
    vmax = float(v.max()) if v.size else 0.0
    if vmax <= 0:
        raise SegmentationError("velocity profile is identically zero")
    distance = max(1, int(round(config.min_separation * rate)))
    peaks, props = find_peaks(v, prominence=config.min_prominence * vmax, distance=distance)
    if len(peaks) < 3:
        raise SegmentationError(f"found {len(peaks)} qualifying velocity peaks, need 3")
    # keep the three with the largest prominence; ties resolved toward earlier frames
    order = np.lexsort((peaks, -props["prominences"]))
    return np.sort(peaks[order[:3]])


def segment_transport(vnorm: UniformSeries, config: SegmentConfig = SegmentConfig()) -> PhaseSegmentation:
    """Isolate the transport phase around the second of three velocity peaks.

    The transport range is grown outward from the second peak while the
    speed stays at or above ``threshold_fraction`` of that peak, and never
    crosses the valley minimum separating it from its neighbours.
    Expects an already low-pass filtered speed profile.
    """
    v = vnorm.data[:, 0]
    p1, p2, p3 = (int(p) for p in find_phase_peaks(v, vnorm.rate, config))
    left_valley = p1 + int(np.argmin(v[p1 : p2 + 1]))
    right_valley = p2 + int(np.argmin(v[p2 : p3 + 1]))
    thr = config.threshold_fraction * v[p2]

    start = p2
    while start - 1 >= left_valley and v[start - 1] >= thr:
        start -= 1
    end = p2
    while end + 1 <= right_valley and v[end + 1] >= thr:
        end += 1

    n = len(v)
    reach = (0, start - 1)
    depart = (end + 1, n - 1)
    return PhaseSegmentation(reach, (start, end), depart, (p1, p2, p3), float(thr))


def transport_duration(seg: PhaseSegmentation, rate: float) -> float:
    return (seg.transport[1] - seg.transport[0] + 1) / rate
