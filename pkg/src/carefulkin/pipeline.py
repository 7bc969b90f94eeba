"""Per-trial preprocessing: raw trial -> transport-phase kinematic features."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, SegmentationError
from .features import KinematicSeries, Source, extract_features
from .flow import FlowConfig, smooth_descriptors
from .ingest import GAP_WARNING_FRACTION, TrialRecord, fill_gaps, gap_fraction, select_marker
from .segment import (
    PhaseSegmentation,
    SegmentConfig,
    segment_transport,
    transport_duration,
    velocity_norm,
)
from .signal import UniformSeries, butterworth_lowpass, downsample


@dataclass(frozen=True)
class PreprocessConfig:
    mocap_filter_order: int = 2
    mocap_filter_cutoff: float = 10.0
    target_rate: float = 22.0
    segment: SegmentConfig = field(default_factory=SegmentConfig)
    flow: FlowConfig = field(default_factory=FlowConfig)
    # "mocap": reuse marker-based boundaries for the camera stream; "flow": segment the descriptor speed
    flow_boundaries: str = "mocap"
    extra_vertical: bool = False


@dataclass
class TrialFeatures:
    trial_id: str
    subject_id: int
    weight_class: str
    carefulness_class: str
    route: str
    shelf_slot: str
    features: KinematicSeries
    segmentation: PhaseSegmentation
    seg_rate: float
    duration: float
    warnings: list = field(default_factory=list)


def mocap_segmentation(record: TrialRecord, config: PreprocessConfig):
    """Repaired, filtered positions of the representative marker plus their segmentation."""
    track = select_marker(record.tracks)
    frac = gap_fraction(track)
    if frac > GAP_WARNING_FRACTION:
        msg = f"{track.marker_id.value} gap fraction {frac:.2f}"
        if msg not in record.warnings:
            record.warnings.append(msg)
    track = fill_gaps(track)
    pos = butterworth_lowpass(
        UniformSeries(track.sample_rate, track.xyz), config.mocap_filter_order, config.mocap_filter_cutoff
    )
    seg_cfg = config.segment
    vn = butterworth_lowpass(velocity_norm(pos), seg_cfg.filter_order, seg_cfg.filter_cutoff)
    return track, pos, segment_transport(vn, seg_cfg)


def _features_mocap(record, config):
    track, pos, seg = mocap_segmentation(record, config)
    transport = UniformSeries(pos.rate, pos.data[seg.transport_slice()])
    working = downsample(transport, config.target_rate)
    if working.frames < 2:
        raise SegmentationError("transport phase shorter than two frames at the working rate")
    feats = extract_features(working, Source.MoCap, config.extra_vertical)
    return feats, seg, pos.rate


def _features_flow(record, config):
    if record.flow_descriptors is None:
        raise ParameterError(f"trial {record.trial_id} has no camera descriptors")
    desc = smooth_descriptors(record.flow_descriptors, config.flow)
    series = desc.as_series()
    if config.flow_boundaries == "mocap" and record.tracks:
        track, pos, mseg = mocap_segmentation(record, config)
        t_start = track.t[mseg.transport[0]]
        t_end = track.t[mseg.transport[1]]
        tk = desc.t
        inside = np.flatnonzero((tk >= t_start - 1e-9) & (tk <= t_end + 1e-9))
        if len(inside) < 2:
            raise SegmentationError("transport phase covers fewer than two camera frames")
        sl = slice(int(inside[0]), int(inside[-1]) + 1)
        seg, seg_rate = mseg, track.sample_rate
    else:
        speed = UniformSeries(series.rate, np.linalg.norm(series.data, axis=1))
        seg_cfg = config.segment
        speed = butterworth_lowpass(speed, seg_cfg.filter_order, seg_cfg.filter_cutoff)
        seg = segment_transport(speed, seg_cfg)
        sl, seg_rate = seg.transport_slice(), series.rate
    working = UniformSeries(series.rate, series.data[sl])
    if working.frames < 2:
        raise SegmentationError("transport phase shorter than two camera frames")
    feats = extract_features(working, Source.OpticalFlow, config.extra_vertical)
    return feats, seg, seg_rate


def preprocess_trial(record: TrialRecord, source: Source, config: PreprocessConfig = PreprocessConfig()) -> TrialFeatures:
    if source is Source.MoCap:
        feats, seg, rate = _features_mocap(record, config)
    else:
        feats, seg, rate = _features_flow(record, config)
    return TrialFeatures(
        trial_id=record.trial_id,
        subject_id=record.subject_id,
        weight_class=record.weight_class,
        carefulness_class=record.carefulness_class,
        route=record.route.value,
        shelf_slot=record.shelf_slot,
        features=feats,
        segmentation=seg,
        seg_rate=rate,
        duration=transport_duration(seg, rate),
        warnings=list(record.warnings),
    )
