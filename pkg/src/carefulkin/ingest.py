"""Trial loading, representative-marker selection and occlusion repair.

Trial files are long-format CSV with header ``t,marker_id,x,y,z,valid``
(seconds, millimetres, 0/1 validity). A JSON manifest lists one entry per
trial with its subject, glass code, route and shelf slot.
"""

from __future__ import annotations

import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import ParseError, SchemaError, UnusableTrialError
from .flow import FlowSeries

GAP_WARNING_FRACTION = 0.5
TRIAL_HEADER = ["t", "marker_id", "x", "y", "z", "valid"]


class Marker(enum.Enum):
    # declaration order is the tie-break priority in select_marker
    IndexMCP = "IndexMCP"
    LittleMCP = "LittleMCP"
    MetacarpalDiaphysis = "MetacarpalDiaphysis"
    RadialStyloid = "RadialStyloid"


MARKER_PRIORITY = {m: i for i, m in enumerate(Marker)}


class Route(enum.Enum):
    ShelfToScale = "ShelfToScale"
    ScaleToShelf = "ScaleToShelf"


SHELF_SLOTS = tuple("ABCDEFGH")


@dataclass(frozen=True)
class GlassSpec:
    code: str
    weight_grams: int
    carefulness: str

    @property
    def weight_class(self) -> str:
        return self.code[:2]

    @property
    def carefulness_class(self) -> str:
        return self.code[2:]


GLASSES = {
    "W1C1": GlassSpec("W1C1", 167, "low"),
    "W2C1": GlassSpec("W2C1", 667, "low"),
    "W1C2": GlassSpec("W1C2", 167, "high"),
    "W2C2": GlassSpec("W2C2", 667, "high"),
}


def glass(code: str) -> GlassSpec:
    try:
        return GLASSES[code]
    except KeyError:
        raise SchemaError(f"unknown glass code {code!r}; expected one of {sorted(GLASSES)}") from None


@dataclass(frozen=True, eq=False)
class MarkerTrack:
    """Time-stamped 3-D positions of one marker.

    ``xyz`` rows where ``valid`` is False carry no information (NaN or a
    placeholder) until :func:`fill_gaps` reconstructs them.
    """

    marker_id: Marker
    sample_rate: float
    t: np.ndarray
    xyz: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if len(self.t) != len(self.xyz) or len(self.t) != len(self.valid):
            raise ValueError("t, xyz and valid must have equal length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError(f"timestamps of {self.marker_id.value} are not strictly increasing")

    @property
    def n_valid(self) -> int:
        return int(np.count_nonzero(self.valid))

    def __eq__(self, other):
        if not isinstance(other, MarkerTrack):
            return NotImplemented
        return (
            self.marker_id == other.marker_id
            and self.sample_rate == other.sample_rate
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.xyz[self.valid], other.xyz[other.valid])
        )


@dataclass
class ManifestEntry:
    path: str
    subject_id: int
    trial_index: int
    glass_code: str
    route: str
    shelf_slot: str
    flow_path: str | None = None
    frames_dir: str | None = None
    frame_rate: float | None = None

    def __post_init__(self):
        glass(self.glass_code)
        if self.route not in Route.__members__:
            raise SchemaError(f"unknown route {self.route!r}")
        if self.shelf_slot not in SHELF_SLOTS:
            raise SchemaError(f"unknown shelf slot {self.shelf_slot!r}")
        if not 1 <= int(self.subject_id) <= 15:
            raise SchemaError(f"subject_id {self.subject_id} outside 1..15")

    @property
    def trial_id(self) -> str:
        return f"s{int(self.subject_id):02d}_t{int(self.trial_index):03d}"

    def to_dict(self) -> dict:
        d = {
            "path": self.path,
            "subject_id": int(self.subject_id),
            "trial_index": int(self.trial_index),
            "glass_code": self.glass_code,
            "route": self.route,
            "shelf_slot": self.shelf_slot,
        }
        for key in ("flow_path", "frames_dir", "frame_rate"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        return d


@dataclass
class TrialRecord:
    subject_id: int
    trial_index: int
    weight_class: str
    carefulness_class: str
    route: Route
    shelf_slot: str
    tracks: list = field(default_factory=list)
    flow_descriptors: FlowSeries | None = None
    warnings: list = field(default_factory=list)
    truth: dict | None = None  # generator ground truth, synthetic trials only

    @property
    def glass_code(self) -> str:
        return self.weight_class + self.carefulness_class

    @property
    def trial_id(self) -> str:
        return f"s{self.subject_id:02d}_t{self.trial_index:03d}"


def read_manifest(path) -> list[ManifestEntry]:
    with open(path) as f:
        raw = json.load(f)
    if not isinstance(raw, list):
        raise SchemaError("manifest must be a JSON array")
    return [ManifestEntry(**entry) for entry in raw]


def write_manifest(entries, path):
    with open(path, "w") as f:
        json.dump([e.to_dict() for e in entries], f, indent=1)
        f.write("\n")


def _parse_float(text, path, line):
    if text == "" or text.lower() == "nan":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise ParseError(f"not a number: {text!r}", path, line) from None


def read_trial_csv(path) -> list[MarkerTrack]:
    """Parse a trial CSV into one :class:`MarkerTrack` per marker."""
    rows: dict[Marker, list] = {}
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != TRIAL_HEADER:
            raise ParseError(f"expected header {','.join(TRIAL_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise ParseError(f"expected 6 fields, got {len(row)}", path, lineno)
            try:
                marker = Marker(row[1].strip())
            except ValueError:
                raise ParseError(f"unknown marker {row[1]!r}", path, lineno) from None
            t = _parse_float(row[0], path, lineno)
            if math.isnan(t):
                raise ParseError("missing timestamp", path, lineno)
            flag = row[5].strip()
            if flag not in ("0", "1"):
                raise ParseError(f"valid must be 0 or 1, got {flag!r}", path, lineno)
            xyz = [_parse_float(v, path, lineno) for v in row[2:5]]
            ok = flag == "1"
            if ok and any(math.isnan(v) for v in xyz):
                raise ParseError("valid sample with missing coordinate", path, lineno)
            rows.setdefault(marker, []).append((t, *xyz, ok))
    if not rows:
        raise ParseError("empty trial", path)

    tracks = []
    for marker in Marker:
        if marker not in rows:
            continue
        arr = rows[marker]
        t = np.array([r[0] for r in arr])
        xyz = np.array([r[1:4] for r in arr], dtype=float)
        valid = np.array([r[4] for r in arr], dtype=bool)
        if len(t) > 1 and np.any(np.diff(t) <= 0):
            raise ParseError(f"timestamps of {marker.value} not strictly increasing", path)
        rate = 1.0 / float(np.median(np.diff(t))) if len(t) > 1 else 100.0
        tracks.append(MarkerTrack(marker, round(rate, 6), t, xyz, valid))
    return tracks


def write_trial_csv(tracks, path):
    """Inverse of :func:`read_trial_csv`; rows are ordered by time, then marker."""
    recs = []
    for tr in tracks:
        for i in range(len(tr.t)):
            recs.append((tr.t[i], MARKER_PRIORITY[tr.marker_id], tr, i))
    recs.sort(key=lambda r: (r[0], r[1]))
    with open(path, "w", newline="") as f:
        f.write(",".join(TRIAL_HEADER) + "\n")
        for t, _, tr, i in recs:
            if tr.valid[i]:
                x, y, z = tr.xyz[i]
                f.write(f"{t:.6f},{tr.marker_id.value},{x:.6f},{y:.6f},{z:.6f},1\n")
            else:
                f.write(f"{t:.6f},{tr.marker_id.value},,,,0\n")


def load_trial(path, manifest: ManifestEntry) -> TrialRecord:
    """Read one trial file and attach its manifest labels.

    A flow descriptor CSV named in the manifest is loaded alongside.
    """
    g = glass(manifest.glass_code)
    tracks = read_trial_csv(path) if path is not None else []
    flow_desc = None
    if manifest.flow_path:
        from .flow import read_flow_csv

        base = Path(path).parent if path is not None else Path(".")
        fp = Path(manifest.flow_path)
        flow_desc = read_flow_csv(fp if fp.is_absolute() else base / fp)
    return TrialRecord(
        subject_id=int(manifest.subject_id),
        trial_index=int(manifest.trial_index),
        weight_class=g.weight_class,
        carefulness_class=g.carefulness_class,
        route=Route(manifest.route),
        shelf_slot=manifest.shelf_slot,
        tracks=tracks,
        flow_descriptors=flow_desc,
    )


def select_marker(tracks) -> MarkerTrack:
    """Return the most visible track; ties go to the earlier marker in :class:`Marker`."""
    usable = [tr for tr in tracks if tr.n_valid >= 2]
    if not usable:
        raise UnusableTrialError("every candidate marker is occluded (fewer than 2 valid samples)")
    return min(usable, key=lambda tr: (-tr.n_valid, MARKER_PRIORITY[tr.marker_id]))


def gap_fraction(track: MarkerTrack) -> float:
    return 1.0 - track.n_valid / len(track.t)


def fill_gaps(track: MarkerTrack) -> MarkerTrack:
    """Reconstruct occluded samples.

    Interior gaps use a piecewise-cubic Hermite interpolant (pchip) through
    all valid samples, one coordinate at a time. Leading and trailing gaps
    hold the nearest valid value. Valid samples are copied through untouched.
    """
    if track.n_valid < 2:
        raise UnusableTrialError(f"{track.marker_id.value} has fewer than 2 valid samples")
    if track.valid.all():
        return track
    ok = track.valid
    t_ok = track.t[ok]
    xyz = track.xyz.copy()
    missing = ~ok
    interior = missing & (track.t > t_ok[0]) & (track.t < t_ok[-1])
    if interior.any():
        interp = PchipInterpolator(t_ok, track.xyz[ok], axis=0)
        xyz[interior] = interp(track.t[interior])
    xyz[missing & (track.t < t_ok[0])] = track.xyz[ok][0]
    xyz[missing & (track.t > t_ok[-1])] = track.xyz[ok][-1]
    return replace(track, xyz=xyz, valid=np.ones_like(ok))
