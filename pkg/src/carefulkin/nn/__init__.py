"""Minimal float64 neural-network stack for the two sequence classifiers."""

from .layers import LSTM, Conv1D, Dense, Dropout, MaxPool1D
from .models import (
    Architecture,
    ModelSpec,
    Network,
    Regularization,
    build_cnn_lstm_dnn,
    build_masked_lstm_dnn,
    cross_entropy,
    forward,
    init_network,
    loss_and_gradients,
)
from .train import (
    Adam,
    EarlyStopping,
    TrainConfig,
    TrainedModel,
    accuracy,
    evaluate,
    load_checkpoint,
    predict,
    save_checkpoint,
    train,
)
