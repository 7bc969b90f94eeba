"""ADAM training loop with validation-loss early stopping, evaluation and checkpoints."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import ParameterError
from .models import ModelSpec, Network, cross_entropy, loss_and_gradients


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    validation_fraction: float = 0.20
    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-7
    stratify: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.validation_fraction < 1:
            raise ParameterError("validation_fraction must be in (0, 1)")
        if self.patience < 1:
            raise ParameterError("patience must be >= 1")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ParameterError("batch_size and max_epochs must be >= 1")


@dataclass
class TrainedModel:
    spec: ModelSpec
    network: Network
    history: list = field(default_factory=list)
    stopped_epoch: int = 0
    best_epoch: int = 0


class Adam:
    """ADAM with the bias correction folded into the step size."""

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, epsilon=1e-7):
        self.lr, self.beta1, self.beta2, self.epsilon = lr, beta1, beta2, epsilon
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1.0 - b2**self.t) / (1.0 - b1**self.t)
        for name, p in params.items():
            g = grads[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr_t * m / (np.sqrt(v) + self.epsilon)


class EarlyStopping:
    """Tracks validation loss; ``update`` returns True once training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = 0
        self.wait = 0

    def update(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.wait = 0
            return False
        self.wait += 1
        return self.wait >= self.patience


def _unpack(dataset):
    if len(dataset) == 3:
        x, y, mask = dataset
    else:
        x, y = dataset
        mask = None
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return x, y, None if mask is None else np.asarray(mask, dtype=bool)


def _take(x, y, mask, idx):
    return x[idx], y[idx], None if mask is None else mask[idx]


def validation_split(labels, fraction, rng, stratify=False):
    """Shuffled ``(train_idx, val_idx)``; validation is the tail of the shuffle."""
    n = len(labels)
    order = rng.permutation(n)
    if not stratify:
        n_val = max(1, int(round(fraction * n)))
        return order[: n - n_val], order[n - n_val :]
    cls = np.argmax(labels, axis=1)[order]
    train, val = [], []
    for c in np.unique(cls):
        members = order[cls == c]
        k = max(1, int(round(fraction * len(members))))
        train.append(members[: len(members) - k])
        val.append(members[len(members) - k :])
    return np.concatenate(train), np.concatenate(val)


def predict(model, x, mask=None, batch_size=256) -> np.ndarray:
    net = getattr(model, "network", model)
    out = []
    for s in range(0, len(x), batch_size):
        m = None if mask is None else mask[s : s + batch_size]
        out.append(net.forward(x[s : s + batch_size], m, False))
    return np.concatenate(out) if out else np.zeros((0, net.spec.n_classes))


def accuracy(scores, labels) -> float:
    if len(labels) == 0:
        return float("nan")
    # np.argmax breaks ties toward index 0
    return float(np.mean(np.argmax(scores, axis=1) == np.argmax(labels, axis=1)))


def evaluate(model, dataset) -> float:
    x, y, mask = _unpack(dataset)
    return accuracy(predict(model, x, mask), y)


def _loss(net, x, y, mask):
    scores = predict(net, x, mask)
    ce, _ = cross_entropy(scores, y)
    return ce + net.penalty(), accuracy(scores, y)


def train(spec: ModelSpec, dataset, config: TrainConfig = TrainConfig()) -> TrainedModel:
    """Fit a fresh network; parameters of the best validation epoch are restored."""
    x, y, mask = _unpack(dataset)
    if len(np.unique(np.argmax(y, axis=1))) < 2:
        raise ParameterError("training data must contain at least two classes")
    seeds = np.random.SeedSequence(config.seed).spawn(3)
    split_rng, shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in seeds)
    tr_idx, va_idx = validation_split(y, config.validation_fraction, split_rng, config.stratify)
    xt, yt, mt = _take(x, y, mask, tr_idx)
    xv, yv, mv = _take(x, y, mask, va_idx)

    net = Network(spec)
    params = {name: p for name, p, _ in net.parameters()}
    opt = Adam(config.learning_rate, config.beta1, config.beta2, config.epsilon)
    stopper = EarlyStopping(config.patience)
    best_state = net.get_state()
    history = []
    epoch = 0
    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(xt))
        losses, hits = [], 0
        for s in range(0, len(order), config.batch_size):
            idx = order[s : s + config.batch_size]
            xb, yb, mb = _take(xt, yt, mt, idx)
            loss, grads = loss_and_gradients(net, xb, yb, mb, True, dropout_rng)
            hits += int(np.sum(np.argmax(net.out._y, axis=1) == np.argmax(yb, axis=1)))
            opt.step(params, grads)
            losses.append(loss * len(idx))
        val_loss, val_acc = _loss(net, xv, yv, mv)
        history.append(
            {
                "epoch": epoch,
                "loss": float(np.sum(losses) / len(xt)),
                "accuracy": hits / len(xt),
                "val_loss": float(val_loss),
                "val_accuracy": float(val_acc),
            }
        )
        improved = val_loss < stopper.best
        stop = stopper.update(epoch, val_loss)
        if improved:
            best_state = net.get_state()
        if stop:
            break
    net.set_state(best_state)
    return TrainedModel(spec, net, history, epoch, stopper.best_epoch)


def save_checkpoint(model: TrainedModel, path):
    meta = {
        "format": "carefulkin-checkpoint/1",
        "spec": model.spec.to_dict(),
        "history": model.history,
        "stopped_epoch": model.stopped_epoch,
        "best_epoch": model.best_epoch,
    }
    state = model.network.get_state()
    meta["shapes"] = {k: list(v.shape) for k, v in state.items()}
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8), **state)


def load_checkpoint(path) -> TrainedModel:
    with np.load(path) as data:
        meta = json.loads(data["__meta__"].tobytes().decode())
        spec = ModelSpec.from_dict(meta["spec"])
        net = Network(spec)
        net.set_state({k: data[k] for k in meta["shapes"]})
    return TrainedModel(spec, net, meta["history"], meta["stopped_epoch"], meta["best_epoch"])


def config_dict(config: TrainConfig) -> dict:
    return asdict(config)
