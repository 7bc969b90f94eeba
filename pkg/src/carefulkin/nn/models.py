"""The two sequence classifiers and their loss."""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import DivergenceError, ParameterError
from .layers import LSTM, Conv1D, Dense, Dropout, MaxPool1D

PROB_CLIP = 1e-7


class Architecture(enum.Enum):
    CnnLstmDnn = "cnn-lstm-dnn"
    MaskedLstmDnn = "masked-lstm-dnn"


@dataclass(frozen=True)
class Regularization:
    conv_l1: float = 0.001
    conv_l2: float = 0.002
    dense_l2: float = 0.001


@dataclass(frozen=True)
class ModelSpec:
    architecture: Architecture
    n_frames: int
    n_features: int = 4
    n_subsequences: int = 4
    conv_filters: int = 64
    kernel_size: int = 3
    pool_size: int = 2
    lstm_units: int = 100
    dense_units: int = 100
    n_classes: int = 2
    output: str = "sigmoid"
    regularization: Regularization = field(default_factory=Regularization)
    dropout_rate: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.output not in ("sigmoid", "softmax"):
            raise ParameterError(f"unknown output activation {self.output!r}")
        if not 0 <= self.dropout_rate < 1:
            raise ParameterError("dropout_rate must be in [0, 1)")
        if self.architecture is Architecture.CnnLstmDnn and self.n_frames % self.n_subsequences:
            raise ParameterError(f"n_frames={self.n_frames} not divisible into {self.n_subsequences} subsequences")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["architecture"] = self.architecture.value
        return d

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        d = dict(d)
        d["architecture"] = Architecture(d["architecture"])
        d["regularization"] = Regularization(**d.get("regularization", {}))
        return cls(**d)


def build_cnn_lstm_dnn(n_frames: int = 32, n_features: int = 4, **overrides) -> ModelSpec:
    if n_frames % overrides.get("n_subsequences", 4):
        raise ParameterError(f"n_frames={n_frames} must be divisible by the subsequence count")
    return ModelSpec(Architecture.CnnLstmDnn, n_frames, n_features, **overrides)


def build_masked_lstm_dnn(max_frames: int = 132, n_features: int = 4, **overrides) -> ModelSpec:
    kw = {"lstm_units": 64, "dense_units": 32}
    kw.update(overrides)
    return ModelSpec(Architecture.MaskedLstmDnn, max_frames, n_features, **kw)


class Network:
    """Parameter container plus forward/backward for one :class:`ModelSpec`."""

    def __init__(self, spec: ModelSpec):
        self.spec = spec
        rng = np.random.default_rng(spec.seed)
        reg = spec.regularization
        if spec.architecture is Architecture.CnnLstmDnn:
            sub_len = spec.n_frames // spec.n_subsequences
            conv2_len = sub_len - 2 * (spec.kernel_size - 1)
            if conv2_len < spec.pool_size:
                raise ParameterError("subsequences too short for two convolutions and pooling")
            pooled = conv2_len // spec.pool_size
            self.conv1 = Conv1D(spec.n_features, spec.conv_filters, spec.kernel_size, rng=rng, name="conv1")
            self.conv2 = Conv1D(spec.conv_filters, spec.conv_filters, spec.kernel_size, rng=rng, name="conv2")
            self.drop1 = Dropout(spec.dropout_rate, name="dropout1")
            self.pool = MaxPool1D(spec.pool_size, name="maxpool")
            self.lstm = LSTM(pooled * spec.conv_filters, spec.lstm_units, rng=rng, name="lstm")
            for conv in (self.conv1, self.conv2):
                conv.regularizers["W"] = (reg.conv_l1, reg.conv_l2)
            self.sequence = [self.conv1, self.conv2, self.drop1, self.pool]
        else:
            self.lstm = LSTM(spec.n_features, spec.lstm_units, rng=rng, name="lstm")
            self.lstm.regularizers["W"] = (reg.conv_l1, reg.conv_l2)
            self.sequence = []
        self.drop2 = Dropout(spec.dropout_rate, name="dropout2")
        self.dense = Dense(spec.lstm_units, spec.dense_units, "relu", rng=rng, name="dense")
        self.dense.regularizers["W"] = (0.0, reg.dense_l2)
        self.out = Dense(spec.dense_units, spec.n_classes, spec.output, rng=rng, name="output")

    @property
    def layers(self):
        return [*self.sequence, self.lstm, self.drop2, self.dense, self.out]

    def parameters(self):
        for layer in self.layers:
            for k, p in layer.params.items():
                yield f"{layer.name}.{k}", p, layer.grads[k]

    def get_state(self) -> dict:
        return {name: p.copy() for name, p, _ in self.parameters()}

    def set_state(self, state):
        for layer in self.layers:
            for k in layer.params:
                layer.params[k][...] = state[f"{layer.name}.{k}"]

    def n_parameters(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def zero_grad(self):
        for layer in self.layers:
            layer.zero_grad()

    def penalty(self) -> float:
        return sum(layer.penalty() for layer in self.layers)

    def _check(self, x, mask):
        spec = self.spec
        if x.ndim != 3 or x.shape[2] != spec.n_features:
            raise ParameterError(f"expected (batch, frames, {spec.n_features}) input, got {x.shape}")
        if spec.architecture is Architecture.CnnLstmDnn and x.shape[1] != spec.n_frames:
            raise ParameterError(f"expected {spec.n_frames} frames, got {x.shape[1]}")
        if mask is not None and mask.shape != x.shape[:2]:
            raise ParameterError(f"mask shape {mask.shape} does not match input {x.shape[:2]}")

    def forward(self, x, mask=None, training=False, rng=None, trace=None):
        x = np.asarray(x, dtype=float)
        self._check(x, mask)
        spec = self.spec

        def note(layer, y):
            if trace is not None:
                trace.append((layer.name, y))
            return y

        if spec.architecture is Architecture.CnnLstmDnn:
            b = x.shape[0]
            s = spec.n_subsequences
            h = x.reshape(b * s, spec.n_frames // s, spec.n_features)
            for layer in self.sequence:
                h = note(layer, layer.forward(h, training, rng))
            self._pooled_shape = h.shape
            h = h.reshape(b, s, -1)
            h = note(self.lstm, self.lstm.forward(h, None, training, rng))
        else:
            h = note(self.lstm, self.lstm.forward(x, mask, training, rng))
        h = note(self.drop2, self.drop2.forward(h, training, rng))
        h = note(self.dense, self.dense.forward(h, training, rng))
        return note(self.out, self.out.forward(h, training, rng))

    def backward(self, dscores):
        g = self.out.backward(dscores)
        g = self.dense.backward(g)
        g = self.drop2.backward(g)
        g = self.lstm.backward(g)
        if self.spec.architecture is Architecture.CnnLstmDnn:
            g = g.reshape(self._pooled_shape)
            for layer in reversed(self.sequence):
                g = layer.backward(g)
            g = g.reshape(-1, self.spec.n_frames, self.spec.n_features)
        for layer in self.layers:
            layer.add_penalty_grads()
        return g


def init_network(spec: ModelSpec) -> Network:
    return Network(spec)


def forward(model, batch, mask=None, training_mode=False, rng=None):
    """Class scores, shape ``(batch, n_classes)``."""
    net = getattr(model, "network", model)
    return net.forward(batch, mask, training_mode, rng)


def cross_entropy(scores, labels):
    """Mean categorical cross-entropy after normalizing scores to sum to one.

    Returns ``(loss, dloss/dscores)``.
    """
    y = np.asarray(labels, dtype=float)
    n = scores.shape[0]
    total = scores.sum(axis=1, keepdims=True)
    p = scores / total
    pc = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    loss = float(-(y * np.log(pc)).sum() / n)
    dp = np.where((p > PROB_CLIP) & (p < 1.0 - PROB_CLIP), -y / pc, 0.0) / n
    # p = s / S  =>  dL/ds_j = (dp_j - sum_k dp_k p_k) / S
    ds = (dp - (dp * p).sum(axis=1, keepdims=True)) / total
    return loss, ds


def loss_and_gradients(model, batch, labels, mask=None, training_mode=False, rng=None):
    """Total loss (cross-entropy plus penalties) and per-parameter gradients."""
    net = getattr(model, "network", model)
    net.zero_grad()
    scores = net.forward(batch, mask, training_mode, rng)
    ce, ds = cross_entropy(scores, labels)
    loss = ce + net.penalty()
    if not np.isfinite(loss):
        trace = []
        net.forward(batch, mask, False, None, trace=trace)
        bad = next((name for name, y in trace if not np.all(np.isfinite(y))), "loss")
        raise DivergenceError(f"non-finite loss; first non-finite output in layer {bad!r}")
    net.backward(ds)
    return loss, {name: g for name, _, g in net.parameters()}
