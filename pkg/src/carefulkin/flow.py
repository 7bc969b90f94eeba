"""Camera motion descriptor: dense optical flow averaged over moving pixels.

Flow is estimated with a coarse-to-fine variational scheme (brightness
constancy with a quadratic smoothness prior, one warp per pyramid level).
The per-frame descriptor is the mean flow vector over pixels whose flow
magnitude clears a threshold, smoothed by a zero-phase 4 Hz low-pass.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import ParameterError, ParseError
from .signal import UniformSeries, butterworth_lowpass

LUMA = (0.299, 0.587, 0.114)

_HS_KERNEL = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=float) / 12.0


@dataclass(frozen=True)
class FlowConfig:
    threshold: float = 0.5  # pixels/frame
    levels: int = 3
    iterations: int = 50
    smoothness: float = 15.0
    filter_order: int = 2
    filter_cutoff: float = 4.0


@dataclass(frozen=True, eq=False)
class FrameSequence:
    rate: float
    frames: np.ndarray  # n x height x width, intensities in [0, 1]

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 3:
            raise ParameterError("frames must be an n x height x width array")
        if self.rate <= 0:
            raise ParameterError("rate must be positive")
        object.__setattr__(self, "frames", f)

    @property
    def width(self) -> int:
        return self.frames.shape[2]

    @property
    def height(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True, eq=False)
class FlowField:
    u: np.ndarray
    v: np.ndarray


@dataclass(eq=False)
class FlowSeries:
    rate: float
    u: np.ndarray
    v: np.ndarray
    quiet: np.ndarray = field(default=None)
    t0: float = 0.0

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        if self.u.shape != self.v.shape or self.u.ndim != 1:
            raise ParameterError("u and v must be equal-length vectors")
        if not (np.all(np.isfinite(self.u)) and np.all(np.isfinite(self.v))):
            raise ParameterError("flow descriptors must be finite")
        if self.quiet is None:
            self.quiet = np.zeros(self.u.shape, dtype=bool)

    def __len__(self):
        return len(self.u)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(len(self.u)) / self.rate

    def as_series(self) -> UniformSeries:
        return UniformSeries(self.rate, np.column_stack([self.u, self.v]))


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luminance in [0, 1] from an 8-bit or float grey/RGB(A) image."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 3:
        img = img[..., :3] @ np.array(LUMA)
    if img.max(initial=0.0) > 1.0:
        img = img / 255.0
    return img


def read_frames(directory, rate: float) -> FrameSequence:
    """Load numbered PGM/PNG frames, sorted by the numeric part of the name."""
    from PIL import Image

    paths = [p for p in Path(directory).iterdir() if p.suffix.lower() in (".png", ".pgm")]
    if not paths:
        raise ParseError("no PGM/PNG frames found", directory)

    def key(p):
        digits = "".join(ch for ch in p.stem if ch.isdigit())
        return (int(digits) if digits else -1, p.name)

    frames = []
    for p in sorted(paths, key=key):
        with Image.open(p) as im:
            frames.append(to_grayscale(np.asarray(im.convert("RGB") if im.mode not in ("L", "I;16") else im)))
    return FrameSequence(rate, np.stack(frames))


def _pyramid(img, levels):
    pyr = [img]
    for _ in range(levels - 1):
        blurred = ndimage.gaussian_filter(pyr[-1], 1.0, mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr[::-1]


def _resize_flow(f, shape):
    zoom = (shape[0] / f.shape[0], shape[1] / f.shape[1])
    return ndimage.zoom(f, zoom, order=1, mode="nearest", grid_mode=True)[: shape[0], : shape[1]]


def _warp(img, u, v):
    h, w = img.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(float)
    return ndimage.map_coordinates(img, [yy + v, xx + u], order=1, mode="nearest")


def dense_flow(prev: np.ndarray, next: np.ndarray, config: FlowConfig = FlowConfig()) -> FlowField:
    """Per-pixel displacement (pixels/frame) taking ``prev`` onto ``next``."""
    prev = np.asarray(prev, dtype=float)
    next = np.asarray(next, dtype=float)
    if prev.shape != next.shape or prev.ndim != 2:
        raise ParameterError(f"frame shapes differ: {prev.shape} vs {next.shape}")
    levels = max(1, min(config.levels, int(np.log2(min(prev.shape))) - 2))
    # smoothness weight is calibrated for 8-bit intensities
    p1 = _pyramid(prev * 255.0, levels)
    p2 = _pyramid(next * 255.0, levels)
    alpha2 = config.smoothness**2

    u = np.zeros_like(p1[0])
    v = np.zeros_like(p1[0])
    for lvl, (a, b) in enumerate(zip(p1, p2)):
        if lvl > 0:
            u = 2.0 * _resize_flow(u, a.shape)
            v = 2.0 * _resize_flow(v, a.shape)
        bw = _warp(b, u, v)
        mean = 0.5 * (a + bw)
        iy, ix = np.gradient(mean)
        it = bw - a
        denom = alpha2 + ix**2 + iy**2
        u0, v0 = u, v
        for _ in range(config.iterations):
            ubar = ndimage.convolve(u, _HS_KERNEL, mode="nearest")
            vbar = ndimage.convolve(v, _HS_KERNEL, mode="nearest")
            resid = (ix * (ubar - u0) + iy * (vbar - v0) + it) / denom
            u = ubar - ix * resid
            v = vbar - iy * resid
    return FlowField(u, v)


def threshold_and_average(flow: FlowField, magnitude_threshold: float):
    """Mean ``(u, v)`` over pixels with flow magnitude >= threshold.

    Returns ``(u_mean, v_mean, quiet)``; ``quiet`` is True (and the means
    zero) when no pixel qualifies.
    """
    if magnitude_threshold < 0:
        raise ParameterError("threshold must be non-negative")
    mag = np.hypot(flow.u, flow.v)
    sel = mag >= magnitude_threshold
    if not sel.any():
        return 0.0, 0.0, True
    return float(flow.u[sel].mean()), float(flow.v[sel].mean()), False


def raw_descriptors(frames: FrameSequence, config: FlowConfig = FlowConfig()) -> FlowSeries:
    """Unfiltered thresholded means, one per consecutive frame pair."""
    u, v, q = [], [], []
    for a, b in zip(frames.frames[:-1], frames.frames[1:]):
        um, vm, quiet = threshold_and_average(dense_flow(a, b, config), config.threshold)
        u.append(um)
        v.append(vm)
        q.append(quiet)
    return FlowSeries(frames.rate, u, v, np.array(q, dtype=bool))


def smooth_descriptors(raw: FlowSeries, config: FlowConfig = FlowConfig()) -> FlowSeries:
    if len(raw) < 2:
        return raw
    out = butterworth_lowpass(raw.as_series(), config.filter_order, config.filter_cutoff)
    return FlowSeries(raw.rate, out.data[:, 0], out.data[:, 1], raw.quiet.copy(), raw.t0)


def flow_descriptor_series(frames: FrameSequence, threshold: float | None = None, config: FlowConfig = FlowConfig()) -> FlowSeries:
    if frames.frames.shape[0] < 3:
        raise ParameterError("need at least 3 frames")
    if threshold is not None:
        config = FlowConfig(**{**config.__dict__, "threshold": threshold})
    return smooth_descriptors(raw_descriptors(frames, config), config)


def read_flow_csv(path) -> FlowSeries:
    t, u, v = [], [], []
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "u_mean", "v_mean"]:
            raise ParseError("expected header t,u_mean,v_mean", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                a, b, c = (float(x) for x in row)
            except ValueError:
                raise ParseError(f"malformed row {row!r}", path, lineno) from None
            t.append(a)
            u.append(b)
            v.append(c)
    if len(t) < 2:
        raise ParseError("flow series needs at least two samples", path)
    # timestamps carry 6 decimals; the span average keeps the rate exact to 3
    rate = round((len(t) - 1) / (t[-1] - t[0]), 3)
    return FlowSeries(rate, u, v, t0=t[0])


def write_flow_csv(series: FlowSeries, path):
    with open(path, "w") as f:
        f.write("t,u_mean,v_mean\n")
        for t, u, v in zip(series.t, series.u, series.v):
            f.write(f"{t:.6f},{u:.6f},{v:.6f}\n")
