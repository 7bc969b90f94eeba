"""Leave-one-subject-out cross-validation and the weight subset analyses."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..errors import ParameterError
from ..nn import ModelSpec, TrainConfig, accuracy, predict, save_checkpoint, train
from .dataset import DatasetTensor, Subset, Task, filter_subset, standardize


@dataclass
class CvReport:
    task: Task
    folds: list
    exclusions: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    ddof: int = 0
    with_excluded: dict | None = None

    def aggregate(self) -> dict:
        return aggregate_folds(self.folds, self.ddof)

    def to_dict(self) -> dict:
        d = {
            "task": self.task.value,
            "folds": self.folds,
            "aggregate": self.aggregate(),
            "exclusions": self.exclusions,
            "meta": self.meta,
        }
        if self.with_excluded is not None:
            d["aggregate_with_excluded"] = self.with_excluded
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def write(self, path):
        Path(path).write_text(self.to_json())

    @classmethod
    def from_dict(cls, d) -> "CvReport":
        return cls(Task(d["task"]), d["folds"], d.get("exclusions", []), d.get("meta", {}), 0, d.get("aggregate_with_excluded"))


def aggregate_folds(folds, ddof: int = 0) -> dict:
    """Mean and standard deviation of per-fold accuracies (population std by default)."""
    out = {"n_folds": len(folds)}
    for key in ("train_accuracy", "test_accuracy"):
        vals = np.array([f[key] for f in folds], dtype=float)
        short = key.split("_")[0]
        out[f"{short}_mean"] = float(vals.mean()) if vals.size else float("nan")
        out[f"{short}_std"] = float(vals.std(ddof=ddof)) if vals.size > ddof else float("nan")
    return out


def loso_cross_validate(
    dataset: DatasetTensor,
    spec: ModelSpec,
    config: TrainConfig,
    task: Task = Task.Carefulness,
    subjects=None,
    normalize: bool = True,
    ddof: int = 0,
    checkpoint_dir=None,
) -> CvReport:
    """One fold per subject: train on the others, test on the held-out subject.

    Fold ``k`` seeds its network and training RNGs with ``seed + k`` so
    folds are independent and the whole run is reproducible.
    """
    all_subjects = sorted(set(int(s) for s in dataset.subject_ids))
    subjects = all_subjects if subjects is None else sorted(int(s) for s in subjects)
    if len(all_subjects) < 2:
        raise ParameterError("cross-validation needs at least two subjects")
    y = dataset.labels(task)
    folds, exclusions = [], []
    for k, s in enumerate(subjects):
        test = np.flatnonzero(dataset.subject_ids == s)
        trainset = np.flatnonzero(dataset.subject_ids != s)
        if test.size == 0:
            exclusions.append({"subject": s, "reason": "no trials"})
            continue
        if len(np.unique(np.argmax(y[trainset], axis=1))) < 2:
            exclusions.append({"subject": s, "reason": "training partition has a single class"})
            continue
        xtr, xte = dataset.data[trainset], dataset.data[test]
        mtr = mte = None
        if dataset.masks is not None:
            mtr, mte = dataset.masks[trainset], dataset.masks[test]
        if normalize:
            (xtr, xte), _ = standardize(xtr, mtr, (xte, mte))
        fold_spec = replace(spec, seed=spec.seed + k)
        fold_cfg = replace(config, seed=config.seed + k)
        data = (xtr, y[trainset], mtr) if mtr is not None else (xtr, y[trainset])
        model = train(fold_spec, data, fold_cfg)
        folds.append(
            {
                "held_out_subject": s,
                "n_train": int(trainset.size),
                "n_test": int(test.size),
                "train_accuracy": accuracy(predict(model, xtr, mtr), y[trainset]),
                "test_accuracy": accuracy(predict(model, xte, mte), y[test]),
                "stopped_epoch": model.stopped_epoch,
                "best_epoch": model.best_epoch,
            }
        )
        if checkpoint_dir is not None:
            Path(checkpoint_dir).mkdir(parents=True, exist_ok=True)
            save_checkpoint(model, Path(checkpoint_dir) / f"fold_s{s:02d}.npz")
    meta = {
        "architecture": spec.architecture.value,
        "layout": dataset.layout.value,
        "source": dataset.source.value,
        "n_trials": len(dataset),
        "class_counts": dataset.class_counts(),
    }
    return CvReport(task, folds, exclusions, meta, ddof)


def subset_analysis(dataset: DatasetTensor, subset: Subset, spec: ModelSpec, config: TrainConfig, **kw) -> CvReport:
    """Weight-task LOSO restricted to one route or one carefulness level."""
    sub = filter_subset(dataset, subset)
    if len(set(sub.subject_ids.tolist())) < 2:
        raise ParameterError(f"subset {subset.value} leaves fewer than two subjects")
    if len(set(sub.weight.tolist())) < 2:
        raise ParameterError(f"subset {subset.value} lacks one of the weight classes")
    report = loso_cross_validate(sub, spec, config, Task.Weight, **kw)
    report.meta["subset"] = subset.value
    return report
