"""Filtering, rate conversion, fixed-length resampling and padding."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter, lfilter_zi

from .errors import PaddingOverflowError, ParameterError


@dataclass(frozen=True, eq=False)
class UniformSeries:
    """Uniformly sampled multichannel signal, ``data`` is frames x channels."""

    rate: float
    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim == 1:
            data = data[:, None]
        object.__setattr__(self, "data", data)
        if self.rate <= 0:
            raise ParameterError("rate must be positive")
        if data.shape[0] < 1:
            raise ParameterError("series needs at least one frame")
        if not np.all(np.isfinite(data)):
            raise ParameterError("series contains missing or non-finite values")

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def t(self) -> np.ndarray:
        return np.arange(self.frames) / self.rate

    def __eq__(self, other):
        if not isinstance(other, UniformSeries):
            return NotImplemented
        return self.rate == other.rate and np.array_equal(self.data, other.data)


@dataclass(frozen=True, eq=False)
class MaskedSeries:
    """Right-padded series; ``mask[i]`` is True for real frames."""

    data: np.ndarray
    mask: np.ndarray

    def unpadded(self) -> np.ndarray:
        return self.data[self.mask]


def butterworth_coefficients(order: int, cutoff: float, rate: float):
    """Digital low-pass Butterworth ``(b, a)`` via the pre-warped bilinear transform."""
    if order < 1:
        raise ParameterError("filter order must be >= 1")
    nyquist = rate / 2.0
    if not 0 < cutoff < nyquist:
        raise ParameterError(f"cutoff {cutoff} Hz must lie in (0, {nyquist}) Hz for rate {rate} Hz")
    fs2 = 2.0 * rate
    warped = fs2 * math.tan(math.pi * cutoff / rate)
    k = np.arange(1, order + 1)
    analog_poles = warped * np.exp(1j * np.pi * (2 * k + order - 1) / (2 * order))
    poles = (fs2 + analog_poles) / (fs2 - analog_poles)
    a = np.real(np.poly(poles))
    b = np.real(np.poly(-np.ones(order)))
    b *= a.sum() / b.sum()  # unit gain at DC
    return b, a


def butterworth_single_pass(series: UniformSeries, order: int, cutoff: float) -> UniformSeries:
    """Causal one-directional application, zero initial state."""
    b, a = butterworth_coefficients(order, cutoff, series.rate)
    return UniformSeries(series.rate, lfilter(b, a, series.data, axis=0))


def _filter_steady(b, a, x, zi):
    return lfilter(b, a, x, axis=0, zi=zi[:, None] * x[0][None, :])[0]


def butterworth_lowpass(series: UniformSeries, order: int, cutoff: float) -> UniformSeries:
    """Zero-phase (forward-backward) Butterworth low-pass.

    Each end is extended by an odd reflection of ``3 * order`` samples and
    both passes start from the filter's steady state, which keeps startup
    transients off short trials.
    """
    b, a = butterworth_coefficients(order, cutoff, series.rate)
    x = series.data
    n = x.shape[0]
    pad = min(3 * order, n - 1)
    if pad > 0:
        head = 2 * x[0] - x[pad:0:-1]
        tail = 2 * x[-1] - x[-2 : -pad - 2 : -1]
        ext = np.concatenate([head, x, tail])
    else:
        ext = x
    zi = lfilter_zi(b, a)
    y = _filter_steady(b, a, ext, zi)
    y = _filter_steady(b, a, y[::-1], zi)[::-1]
    if pad > 0:
        y = y[pad:-pad]
    return UniformSeries(series.rate, np.ascontiguousarray(y))


def downsample(series: UniformSeries, target_rate: float) -> UniformSeries:
    """Linear interpolation at ``k / target_rate`` over the original duration.

    No anti-aliasing is applied here; filter upstream.
    """
    if target_rate <= 0:
        raise ParameterError("target_rate must be positive")
    if target_rate > series.rate:
        raise ParameterError("target_rate must not exceed the source rate")
    if target_rate == series.rate:
        return UniformSeries(series.rate, series.data.copy())
    duration = (series.frames - 1) / series.rate
    n_out = int(math.floor(duration * target_rate + 1e-9)) + 1
    t_new = np.arange(n_out) / target_rate
    t_old = series.t
    out = np.column_stack([np.interp(t_new, t_old, series.data[:, c]) for c in range(series.channels)])
    return UniformSeries(target_rate, out)


def resample_fixed(series: UniformSeries, n_frames: int) -> UniformSeries:
    """Stretch or squeeze a series onto ``n_frames`` points in normalized time.

    The returned rate is nominal: it keeps the source duration.
    """
    if n_frames < 2:
        raise ParameterError("n_frames must be >= 2")
    if series.frames < 2:
        raise ParameterError("series needs at least two frames to resample")
    if series.frames == n_frames:
        return UniformSeries(series.rate, series.data.copy())
    old = np.linspace(0.0, 1.0, series.frames)
    new = np.linspace(0.0, 1.0, n_frames)
    out = np.column_stack([np.interp(new, old, series.data[:, c]) for c in range(series.channels)])
    rate = series.rate * (n_frames - 1) / (series.frames - 1)
    return UniformSeries(rate, out)


def zero_pad(series: UniformSeries, max_frames: int, name: str | None = None) -> MaskedSeries:
    n = series.frames
    if n > max_frames:
        who = f"trial {name}: " if name else ""
        raise PaddingOverflowError(f"{who}{n} frames exceed the padded length {max_frames}")
    data = np.zeros((max_frames, series.channels))
    data[:n] = series.data
    mask = np.zeros(max_frames, dtype=bool)
    mask[:n] = True
    return MaskedSeries(data, mask)


def median_and_mad(values) -> tuple[float, float]:
    """Median (midpoint convention for even counts) and median absolute deviation."""
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise ParameterError("median of an empty list")
    med = float(np.median(x))
    return med, float(np.median(np.abs(x - med)))
