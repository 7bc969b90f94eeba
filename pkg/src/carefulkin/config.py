"""Full pipeline configuration with JSON round-trip.

Defaults reproduce the reference protocol; a JSON file may override any
subset of fields and command-line flags override the file.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ParameterError
from .experiment.synth import SynthConfig
from .flow import FlowConfig
from .nn import Regularization, TrainConfig
from .pipeline import PreprocessConfig
from .segment import SegmentConfig

SOURCES = ("mocap", "flow")
TASKS = ("carefulness", "weight")
LAYOUTS = ("resampled32", "padded132")
ARCHITECTURES = ("cnn-lstm-dnn", "masked-lstm-dnn")
SUBSETS = ("none", "scale-to-shelf", "low-care", "high-care")
EXCLUSION_MODES = ("auto", "none", "list")

DEFAULT_LAYOUT = {"cnn-lstm-dnn": "resampled32", "masked-lstm-dnn": "padded132"}


@dataclass
class PathsConfig:
    out: str = "out"
    manifest: str | None = None  # defaults to <out>/manifest.json


@dataclass
class DatasetConfig:
    class_cap: int = 235
    exclude_outliers: str = "auto"
    exclude_subjects: list = field(default_factory=list)
    outlier_factor: float = 3.0
    normalize: bool = True


@dataclass
class ModelConfig:
    architecture: str = "cnn-lstm-dnn"
    layout: str | None = None  # follows the architecture when unset
    conv_filters: int = 64
    kernel_size: int = 3
    pool_size: int = 2
    n_subsequences: int = 4
    cnn_lstm_units: int = 100
    cnn_dense_units: int = 100
    masked_lstm_units: int = 64
    masked_dense_units: int = 32
    output: str = "sigmoid"
    dropout_rate: float = 0.5
    regularization: Regularization = field(default_factory=Regularization)


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    source: str = "mocap"
    task: str = "carefulness"
    subset: str = "none"
    aggregate_ddof: int = 0
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        for name, value, allowed in (
            ("source", self.source, SOURCES),
            ("task", self.task, TASKS),
            ("subset", self.subset, SUBSETS),
            ("architecture", self.model.architecture, ARCHITECTURES),
            ("exclude_outliers", self.dataset.exclude_outliers, EXCLUSION_MODES),
            ("flow_boundaries", self.preprocess.flow_boundaries, SOURCES),
        ):
            if value not in allowed:
                raise ParameterError(f"{name} must be one of {', '.join(allowed)}; got {value!r}")
        if self.model.layout is not None and self.model.layout not in LAYOUTS:
            raise ParameterError(f"layout must be one of {', '.join(LAYOUTS)}; got {self.model.layout!r}")
        if self.model.architecture == "cnn-lstm-dnn" and self.layout != "resampled32":
            raise ParameterError("cnn-lstm-dnn needs the resampled32 layout")
        if self.dataset.class_cap < 1:
            raise ParameterError("class_cap must be >= 1")
        if self.seed < 0:
            raise ParameterError("seed must be non-negative")
        return self

    # the top-level seed drives every random component
    def synth_config(self) -> SynthConfig:
        return dataclasses.replace(self.synth, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return dataclasses.replace(self.train, seed=self.seed)

    def model_spec(self):
        from .nn import build_cnn_lstm_dnn, build_masked_lstm_dnn

        m = self.model
        n_features = 5 if self.preprocess.extra_vertical else 4
        common = dict(output=m.output, dropout_rate=m.dropout_rate, regularization=m.regularization, seed=self.seed)
        if m.architecture == "cnn-lstm-dnn":
            return build_cnn_lstm_dnn(
                32, n_features, n_subsequences=m.n_subsequences, conv_filters=m.conv_filters, kernel_size=m.kernel_size,
                pool_size=m.pool_size, lstm_units=m.cnn_lstm_units, dense_units=m.cnn_dense_units, **common,
            )
        return build_masked_lstm_dnn(132, n_features, lstm_units=m.masked_lstm_units, dense_units=m.masked_dense_units, **common)

    @property
    def layout(self) -> str:
        return self.model.layout or DEFAULT_LAYOUT[self.model.architecture]

    @property
    def out_dir(self) -> Path:
        return Path(self.paths.out)

    @property
    def manifest_path(self) -> Path:
        return Path(self.paths.manifest) if self.paths.manifest else self.out_dir / "manifest.json"

    def to_dict(self) -> dict:
        return _to_plain(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        return _from_plain(cls, d, "config")

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ParameterError(f"config file not found: {path}") from None
        except json.JSONDecodeError as err:
            raise ParameterError(f"config file {path} is not valid JSON: {err}") from None
        if not isinstance(raw, dict):
            raise ParameterError("config file must hold a JSON object")
        return cls.from_dict(raw)


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    return obj


def _from_plain(cls, data, where):
    if not isinstance(data, dict):
        raise ParameterError(f"{where} must be an object")
    hints = typing.get_type_hints(cls)
    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ParameterError(f"unknown {where} field(s): {', '.join(unknown)}")
    base = cls()
    kwargs = {}
    for name in known:
        if name not in data:
            continue
        value = data[name]
        hint = hints[name]
        current = getattr(base, name)
        if dataclasses.is_dataclass(hint):
            kwargs[name] = _merge(hint, current, value, f"{where}.{name}")
        elif isinstance(current, tuple):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
    try:
        return dataclasses.replace(base, **kwargs)
    except (TypeError, ValueError) as err:
        raise ParameterError(f"{where}: {err}") from None


def _merge(cls, current, value, where):
    # nested sections may be partial; unspecified fields keep their defaults
    merged = {**_to_plain(current), **value} if isinstance(value, dict) else value
    return _from_plain(cls, merged, where)


def golden_defaults() -> dict:
    """Reference protocol constants, keyed by dotted config path."""
    return {
        "preprocess.mocap_filter_order": 2,
        "preprocess.mocap_filter_cutoff": 10.0,
        "preprocess.target_rate": 22.0,
        "preprocess.segment.threshold_fraction": 0.05,
        "preprocess.segment.filter_order": 4,
        "preprocess.segment.filter_cutoff": 5.0,
        "preprocess.flow.filter_order": 2,
        "preprocess.flow.filter_cutoff": 4.0,
        "dataset.class_cap": 235,
        "model.cnn_lstm_units": 100,
        "model.cnn_dense_units": 100,
        "model.masked_lstm_units": 64,
        "model.masked_dense_units": 32,
        "model.n_subsequences": 4,
        "model.dropout_rate": 0.5,
        "model.output": "sigmoid",
        "model.regularization.conv_l1": 0.001,
        "model.regularization.conv_l2": 0.002,
        "model.regularization.dense_l2": 0.001,
        "train.batch_size": 16,
        "train.patience": 5,
        "train.validation_fraction": 0.2,
        "train.learning_rate": 0.001,
        "train.beta1": 0.9,
        "train.beta2": 0.999,
        "synth.n_subjects": 15,
        "synth.careful_duration": [2.04, 0.18],
        "synth.noncareful_duration": [1.47, 0.15],
        "synth.heavy_speed_multiplier": 0.92,
        "synth.camera_rate": 22.0,
    }


def lookup(config: PipelineConfig, dotted: str):
    node = config.to_dict()
    for part in dotted.split("."):
        node = node[part]
    return node


__all__ = [
    "PipelineConfig",
    "PathsConfig",
    "DatasetConfig",
    "ModelConfig",
    "SynthConfig",
    "PreprocessConfig",
    "SegmentConfig",
    "FlowConfig",
    "TrainConfig",
    "Regularization",
    "golden_defaults",
    "lookup",
]
