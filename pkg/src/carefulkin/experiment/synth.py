"""Synthetic ground-truth trials standing in for the unpublished recordings.

Every trial is rest -> reach -> grasp pause -> transport -> release pause ->
depart -> rest, each movement a minimum-jerk point-to-point profile with a
small vertical lift. The transport duration is drawn from a per-class
normal model; heavy glasses slow the transport by a constant speed factor.
Trials carry 100 Hz marker tracks (four rigidly attached markers with
occlusion gaps) and a 22 Hz projected image-velocity stream that stands in
for camera descriptors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ParameterError
from ..flow import FlowSeries
from ..ingest import (
    GLASSES,
    SHELF_SLOTS,
    Marker,
    MarkerTrack,
    Route,
    TrialRecord,
)

GLASS_ORDER = ("W1C1", "W2C1", "W1C2", "W2C2")

# mm; x to the subject's right, y away from the subject, z up
REST = np.array([0.0, 0.0, 0.0])
SCALE = np.array([0.0, 300.0, 0.0])
MARKER_OFFSETS = {
    Marker.IndexMCP: np.array([20.0, 30.0, 10.0]),
    Marker.LittleMCP: np.array([-25.0, 25.0, 5.0]),
    Marker.MetacarpalDiaphysis: np.array([0.0, 5.0, 15.0]),
    Marker.RadialStyloid: np.array([0.0, -60.0, 0.0]),
}


def _slot_positions():
    slots = {}
    for i, letter in enumerate(SHELF_SLOTS):
        side = -1.0 if i < 4 else 1.0  # A-D left shelf, E-H right shelf
        top = (i % 4) < 2
        front = (i % 2) == 0
        slots[letter] = np.array([side * 350.0, 250.0 if front else 350.0, 250.0 if top else 50.0])
    return slots


SLOTS = _slot_positions()


@dataclass(frozen=True)
class SynthConfig:
    n_subjects: int = 15
    trials_per_subject: int = 64
    careful_duration: tuple = (2.04, 0.18)  # mean, sd in seconds
    noncareful_duration: tuple = (1.47, 0.15)
    heavy_speed_multiplier: float = 0.92
    min_duration: float = 0.4
    reach_duration: tuple = (0.90, 0.08)
    pause: float = 0.35
    rest: float = 0.30
    lift_mm: float = 60.0
    subject_tempo_sd: float = 0.03
    noise_mm: float = 0.3
    occlusion_rate: float = 0.5  # expected gaps per marker per trial
    rate: float = 100.0
    camera_rate: float = 22.0
    px_per_mm: float = 0.34
    roi_gain: float = 0.7
    flow_noise: float = 0.15
    flow_threshold: float = 0.5
    outlier_subjects: tuple = ()
    outlier_shift: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_subjects < 1 or self.trials_per_subject < 1:
            raise ParameterError("need at least one subject and one trial")
        if not 0 < self.heavy_speed_multiplier <= 1:
            raise ParameterError("heavy_speed_multiplier must be in (0, 1]")


@dataclass
class PhasePlan:
    start: np.ndarray
    goal: np.ndarray
    t0: float
    duration: float
    lift: float


def minimum_jerk(x0, xf, duration, t):
    """Position and velocity of a minimum-jerk move starting at ``t = 0``."""
    x0 = np.asarray(x0, dtype=float)
    xf = np.asarray(xf, dtype=float)
    tau = np.clip(np.asarray(t, dtype=float) / duration, 0.0, 1.0)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    ds = (30 * tau**2 - 60 * tau**3 + 30 * tau**4) / duration
    pos = x0 + np.multiply.outer(s, xf - x0)
    vel = np.multiply.outer(ds, xf - x0)
    return pos, vel


def _lift(duration, t):
    tau = np.clip(t / duration, 0.0, 1.0)
    q = tau * (1 - tau)
    # 64 q^3 peaks at 1 mid-move and has zero velocity and acceleration at both ends
    return 64 * q**3, 192 * q**2 * (1 - 2 * tau) / duration


def trial_plan(route: Route, slot: str, transport: float, reach: float, depart: float, cfg: SynthConfig):
    shelf = SLOTS[slot]
    pick, place = (shelf, SCALE) if route is Route.ShelfToScale else (SCALE, shelf)
    t = cfg.rest
    phases = []
    for a, b, dur, lift in (
        (REST, pick, reach, cfg.lift_mm / 2),
        (pick, place, transport, cfg.lift_mm),
        (place, REST, depart, cfg.lift_mm / 2),
    ):
        phases.append(PhasePlan(a, b, t, dur, lift))
        t += dur + cfg.pause
    total = t - cfg.pause + cfg.rest
    return phases, total


def hand_kinematics(phases, t):
    """Hand position and velocity at times ``t`` for a phase plan."""
    pos = np.tile(phases[0].start, (len(t), 1))
    vel = np.zeros((len(t), 3))
    for ph in phases:
        local = t - ph.t0
        after = local >= 0
        p, v = minimum_jerk(ph.start, ph.goal, ph.duration, local[after])
        b, db = _lift(ph.duration, local[after])
        p[:, 2] += ph.lift * b
        v[:, 2] += ph.lift * db
        pos[after] = p
        moving = after & (local <= ph.duration)
        vel[after] = np.where(moving[after][:, None], v, 0.0)
    return pos, vel


def _occlusion_mask(n, rate, near_slot, low_right, rng, cfg):
    valid = np.ones(n, dtype=bool)
    for _ in range(rng.poisson(cfg.occlusion_rate)):
        length = int(rng.uniform(0.05, 0.4) * rate)
        start = int(rng.integers(0, max(1, n - length)))
        valid[start : start + length] = False
    if low_right:
        # the shelf hides the fingers while the hand is inside a lower right slot
        hidden = near_slot & (rng.random() < 0.8)
        valid &= ~hidden
    return valid


def _design_row(i: int, n_total: int):
    rep, leg = divmod(i, 2)
    code = GLASS_ORDER[(rep + rep // 8) % 4]
    slot = SHELF_SLOTS[rep % 8]
    route = Route.ShelfToScale if leg == 0 else Route.ScaleToShelf
    return code, slot, route


def draw_transport_duration(code: str, rng, cfg: SynthConfig, subject: int, tempo: float) -> float:
    g = GLASSES[code]
    mean, sd = cfg.careful_duration if g.carefulness == "high" else cfg.noncareful_duration
    if subject in cfg.outlier_subjects and g.carefulness == "low":
        mean += cfg.outlier_shift
    d = max(cfg.min_duration, rng.normal(mean, sd)) * tempo
    if g.weight_class == "W2":
        d /= cfg.heavy_speed_multiplier
    return d


def generate_trial(subject: int, index: int, code: str, slot: str, route: Route, rng, cfg: SynthConfig, tempo: float = 1.0) -> TrialRecord:
    transport = draw_transport_duration(code, rng, cfg, subject, tempo)
    reach = max(0.4, rng.normal(*cfg.reach_duration)) * tempo
    depart = max(0.4, rng.normal(*cfg.reach_duration)) * tempo
    phases, total = trial_plan(route, slot, transport, reach, depart, cfg)

    n = int(np.floor(total * cfg.rate)) + 1
    t = np.arange(n) / cfg.rate
    hand, _ = hand_kinematics(phases, t)
    shelf = SLOTS[slot]
    near_slot = np.linalg.norm(hand - shelf, axis=1) < 120.0
    low_right = shelf[0] > 0 and shelf[2] < 100
    tracks = []
    for marker, offset in MARKER_OFFSETS.items():
        xyz = hand + offset + rng.normal(0.0, cfg.noise_mm, size=(n, 3))
        valid = _occlusion_mask(n, cfg.rate, near_slot, low_right and marker is not Marker.RadialStyloid, rng, cfg)
        xyz[~valid] = np.nan
        tracks.append(MarkerTrack(marker, cfg.rate, t, xyz, valid))

    m = int(np.floor(total * cfg.camera_rate)) + 1
    tc = np.arange(m) / cfg.camera_rate
    _, vel = hand_kinematics(phases, tc)
    # camera faces the subject: image right is the subject's left, image down is world down
    scale = cfg.roi_gain * cfg.px_per_mm / cfg.camera_rate
    u = -scale * vel[:, 0] + rng.normal(0.0, cfg.flow_noise, m)
    v = -scale * vel[:, 2] + rng.normal(0.0, cfg.flow_noise, m)
    quiet = np.hypot(u, v) < cfg.flow_threshold
    u[quiet] = 0.0
    v[quiet] = 0.0
    flow = FlowSeries(cfg.camera_rate, u, v, quiet)

    g = GLASSES[code]
    rec = TrialRecord(
        subject_id=subject,
        trial_index=index,
        weight_class=g.weight_class,
        carefulness_class=g.carefulness_class,
        route=route,
        shelf_slot=slot,
        tracks=tracks,
        flow_descriptors=flow,
        truth={
            "transport_duration": transport,
            "transport_start": phases[1].t0,
            "pick": phases[1].start.tolist(),
            "place": phases[1].goal.tolist(),
        },
    )
    return rec


def generate_synthetic_trials(config: SynthConfig = SynthConfig()) -> list[TrialRecord]:
    """Full seeded cohort; subjects are numbered from 1."""
    root = np.random.SeedSequence(config.seed)
    trials = []
    for subject, seq in enumerate(root.spawn(config.n_subjects), start=1):
        rng = np.random.default_rng(seq)
        tempo = float(np.exp(rng.normal(0.0, config.subject_tempo_sd)))
        for i in range(config.trials_per_subject):
            code, slot, route = _design_row(i, config.trials_per_subject)
            trials.append(generate_trial(subject, i, code, slot, route, rng, config, tempo))
    return trials
