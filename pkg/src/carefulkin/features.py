"""Per-frame kinematic features: speed, curvature, radius of curvature, angular velocity.

For camera descriptors the velocity is the augmented vector
``(u, v, dt)`` and acceleration the per-frame difference ``(du, dv, 0)``.
Marker trajectories use ordinary 3-D differential kinematics in mm and s.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .signal import UniformSeries

EPS_SPEED = 1e-8
EPS_CURVATURE = 1e-12
R_MAX = 1e6

FEATURE_NAMES = ("V", "C", "R", "A")


class Source(enum.Enum):
    MoCap = "mocap"
    OpticalFlow = "flow"


@dataclass(frozen=True, eq=False)
class KinematicSeries:
    rate: float
    data: np.ndarray  # frames x 4: V, C, R, A
    source: Source
    delta_t: float

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    def as_series(self) -> UniformSeries:
        return UniformSeries(self.rate, self.data)


def velocity_vectors(series: UniformSeries, source: Source) -> np.ndarray:
    if source is Source.OpticalFlow:
        if series.channels != 2:
            raise ParameterError(f"optical-flow velocity needs 2 channels, got {series.channels}")
        dt = np.full((series.frames, 1), 1.0 / series.rate)
        return np.hstack([series.data, dt])
    if series.channels != 3:
        raise ParameterError(f"mocap velocity needs 3 position channels, got {series.channels}")
    if series.frames < 2:
        raise ParameterError("mocap velocity needs at least two frames")
    return np.gradient(series.data, 1.0 / series.rate, axis=0)


def velocity_magnitude(v) -> np.ndarray | float:
    return np.linalg.norm(v, axis=-1)


def acceleration_vectors(velocities, source: Source = Source.OpticalFlow, rate: float | None = None) -> np.ndarray:
    """Backward-difference acceleration; frame 0 repeats frame 1.

    For optical flow only the two image components are differenced, per
    frame, and the third component is zero. For mocap all three components
    are differenced and divided by the frame period, so ``rate`` is required.
    """
    vel = np.asarray(velocities, dtype=float)
    if vel.shape[0] < 2:
        raise ParameterError("acceleration needs at least two velocity samples")
    acc = np.zeros_like(vel)
    if source is Source.OpticalFlow:
        acc[1:, :2] = np.diff(vel[:, :2], axis=0)
    else:
        if rate is None:
            raise ParameterError("mocap acceleration needs the sample rate")
        acc[1:] = np.diff(vel, axis=0) * rate
    acc[0] = acc[1]
    return acc


def curvature(v, a) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    speed = np.linalg.norm(v, axis=-1)
    cross = np.linalg.norm(np.cross(v, a), axis=-1)
    with np.errstate(divide="ignore", invalid="ignore"):
        c = cross / speed**3
    return np.where(speed < EPS_SPEED, 0.0, c)


def radius_and_angular_velocity(V, C):
    """``R = 1/C`` clamped to ``R_MAX``; ``A = V / R``."""
    C = np.asarray(C, dtype=float)
    R = np.minimum(1.0 / np.maximum(C, EPS_CURVATURE), R_MAX)
    return R, np.asarray(V, dtype=float) / R


def extract_features(trial_signal: UniformSeries, source: Source, extra_vertical: bool = False) -> KinematicSeries:
    """Feature matrix for a transport segment already at the working rate.

    With ``extra_vertical`` a fifth channel holds the vertical velocity
    component (z for mocap, image v for flow).
    """
    vel = velocity_vectors(trial_signal, source)
    acc = acceleration_vectors(vel, source, trial_signal.rate)
    V = velocity_magnitude(vel)
    C = curvature(vel, acc)
    R, A = radius_and_angular_velocity(V, C)
    cols = [V, C, R, A]
    if extra_vertical:
        cols.append(vel[:, 2] if source is Source.MoCap else vel[:, 1])
    return KinematicSeries(trial_signal.rate, np.column_stack(cols), source, 1.0 / trial_signal.rate)
