"""Balanced dataset construction and the two tensor layouts."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ..errors import ParameterError
from ..features import Source
from ..signal import UniformSeries, resample_fixed, zero_pad

RESAMPLED_FRAMES = 32
PADDED_FRAMES = 132
CLASS_CAP = 235


class Layout(enum.Enum):
    Resampled32 = "resampled32"
    Padded132 = "padded132"


class Task(enum.Enum):
    Carefulness = "carefulness"
    Weight = "weight"


class Subset(enum.Enum):
    none = "none"
    ScaleToShelfOnly = "scale-to-shelf"
    LowCarefulnessOnly = "low-care"
    HighCarefulnessOnly = "high-care"


def class_code(trial) -> str:
    return trial.weight_class + trial.carefulness_class


@dataclass(eq=False)
class DatasetTensor:
    """Trials x frames x features array with per-trial labels and metadata.

    ``weight`` is 1 for W2 (heavy) and ``careful`` is 1 for C2 (high care).
    """

    layout: Layout
    data: np.ndarray
    weight: np.ndarray
    careful: np.ndarray
    subject_ids: np.ndarray
    source: Source
    masks: np.ndarray | None = None
    trial_ids: list = field(default_factory=list)
    routes: list = field(default_factory=list)
    slots: list = field(default_factory=list)
    durations: np.ndarray | None = None

    def __len__(self):
        return self.data.shape[0]

    @property
    def shape(self):
        return self.data.shape

    def labels(self, task: Task) -> np.ndarray:
        """One-hot labels; class 1 is heavy (weight) or high care (carefulness)."""
        y = self.careful if task is Task.Carefulness else self.weight
        return np.eye(2)[y.astype(int)]

    def class_counts(self) -> dict:
        codes = [f"W{w + 1}C{c + 1}" for w, c in zip(self.weight, self.careful)]
        return {k: codes.count(k) for k in ("W1C1", "W2C1", "W1C2", "W2C2")}

    def take(self, idx) -> "DatasetTensor":
        idx = np.asarray(idx, dtype=int)
        pick = lambda seq: [seq[i] for i in idx] if seq else []
        return DatasetTensor(
            self.layout,
            self.data[idx],
            self.weight[idx],
            self.careful[idx],
            self.subject_ids[idx],
            self.source,
            None if self.masks is None else self.masks[idx],
            pick(self.trial_ids),
            pick(self.routes),
            pick(self.slots),
            None if self.durations is None else self.durations[idx],
        )

    def series(self, i) -> np.ndarray:
        """Unpadded feature matrix of trial ``i``."""
        return self.data[i] if self.masks is None else self.data[i][self.masks[i]]


def balance_classes(trials, per_class_cap: int = CLASS_CAP, seed: int = 0) -> list:
    """Cap every glass class at ``per_class_cap`` trials by seeded sampling; result is shuffled."""
    rng = np.random.default_rng(seed)
    by_class: dict[str, list] = {}
    for t in trials:
        by_class.setdefault(class_code(t), []).append(t)
    keep = []
    for code in sorted(by_class):
        members = by_class[code]
        if len(members) > per_class_cap:
            idx = np.sort(rng.choice(len(members), per_class_cap, replace=False))
            members = [members[i] for i in idx]
        keep.extend(members)
    order = rng.permutation(len(keep))
    return [keep[i] for i in order]


def assemble(trials, layout: Layout, source: Source | None = None) -> DatasetTensor:
    """Stack preprocessed trials into one layout.

    Labels for both tasks are kept; :meth:`DatasetTensor.labels` selects one.
    """
    if not trials:
        raise ParameterError("no trials to assemble")
    rows, masks = [], []
    for t in trials:
        series = t.features.as_series()
        if layout is Layout.Resampled32:
            rows.append(resample_fixed(series, RESAMPLED_FRAMES).data)
        else:
            padded = zero_pad(series, PADDED_FRAMES, name=t.trial_id)
            rows.append(padded.data)
            masks.append(padded.mask)
    return DatasetTensor(
        layout=layout,
        data=np.stack(rows),
        weight=np.array([t.weight_class == "W2" for t in trials], dtype=int),
        careful=np.array([t.carefulness_class == "C2" for t in trials], dtype=int),
        subject_ids=np.array([t.subject_id for t in trials], dtype=int),
        source=source or trials[0].features.source,
        masks=np.stack(masks) if masks else None,
        trial_ids=[t.trial_id for t in trials],
        routes=[t.route for t in trials],
        slots=[t.shelf_slot for t in trials],
        durations=np.array([t.duration for t in trials], dtype=float),
    )


def to_resampled(ds: DatasetTensor) -> DatasetTensor:
    """Resampled32 view of a padded dataset (drop padding, then resample each trial)."""
    if ds.layout is Layout.Resampled32:
        return ds
    rows = [resample_fixed(UniformSeries(1.0, ds.series(i)), RESAMPLED_FRAMES).data for i in range(len(ds))]
    out = ds.take(np.arange(len(ds)))
    out.layout = Layout.Resampled32
    out.data = np.stack(rows)
    out.masks = None
    return out


def filter_subset(ds: DatasetTensor, subset: Subset) -> DatasetTensor:
    if subset is Subset.none:
        return ds
    if subset is Subset.ScaleToShelfOnly:
        keep = [i for i, r in enumerate(ds.routes) if r == "ScaleToShelf"]
    elif subset is Subset.LowCarefulnessOnly:
        keep = np.flatnonzero(ds.careful == 0)
    else:
        keep = np.flatnonzero(ds.careful == 1)
    if len(keep) == 0:
        raise ParameterError(f"subset {subset.value} is empty")
    return ds.take(keep)


def standardize(train: np.ndarray, train_mask, *arrays_and_masks):
    """Per-channel z-score from real training frames, applied to every passed array.

    Padded frames stay exactly zero.
    """
    flat = train[train_mask] if train_mask is not None else train.reshape(-1, train.shape[-1])
    mean = flat.mean(axis=0)
    std = flat.std(axis=0)
    std[std == 0] = 1.0
    out = []
    for x, m in [(train, train_mask), *arrays_and_masks]:
        z = (x - mean) / std
        if m is not None:
            z = np.where(m[..., None], z, 0.0)
        out.append(z)
    return out, (mean, std)
