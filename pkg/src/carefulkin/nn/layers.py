"""Layers with hand-written backward passes.

Every layer caches what it needs during ``forward`` and ``backward`` turns
an upstream gradient into the input gradient while filling ``self.grads``.
Arrays are float64 throughout.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(x):
    # tanh form cannot overflow
    return 0.5 + 0.5 * np.tanh(0.5 * x)


def _softmax(x):
    z = x - x.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def uniform_fan_in(rng, fan_in, shape):
    limit = np.sqrt(3.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    name = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        # param name -> (l1, l2)
        self.regularizers: dict[str, tuple[float, float]] = {}

    def zero_grad(self):
        for k, p in self.params.items():
            self.grads[k] = np.zeros_like(p)

    def penalty(self) -> float:
        total = 0.0
        for k, (l1, l2) in self.regularizers.items():
            w = self.params[k]
            total += l1 * np.abs(w).sum() + l2 * np.square(w).sum()
        return total

    def add_penalty_grads(self):
        for k, (l1, l2) in self.regularizers.items():
            w = self.params[k]
            self.grads[k] += l1 * np.sign(w) + 2.0 * l2 * w


class Dense(Layer):
    def __init__(self, n_in, n_out, activation="linear", rng=None, name="dense"):
        super().__init__()
        self.name = name
        self.activation = activation
        rng = rng or np.random.default_rng(0)
        self.params["W"] = uniform_fan_in(rng, n_in, (n_in, n_out))
        self.params["b"] = np.zeros(n_out)
        self.zero_grad()

    def forward(self, x, training=False, rng=None):
        self._x = x
        z = x @ self.params["W"] + self.params["b"]
        if self.activation == "relu":
            y = np.maximum(z, 0.0)
        elif self.activation == "sigmoid":
            y = _sigmoid(z)
        elif self.activation == "softmax":
            y = _softmax(z)
        else:
            y = z
        self._z, self._y = z, y
        return y

    def backward(self, dy):
        if self.activation == "relu":
            dz = dy * (self._z > 0)
        elif self.activation == "sigmoid":
            dz = dy * self._y * (1.0 - self._y)
        elif self.activation == "softmax":
            s = self._y
            dz = s * (dy - (dy * s).sum(axis=-1, keepdims=True))
        else:
            dz = dy
        self.grads["W"] += self._x.T @ dz
        self.grads["b"] += dz.sum(axis=0)
        return dz @ self.params["W"].T


class Conv1D(Layer):
    """Valid 1-D convolution over ``(batch, time, channels)`` with optional ReLU."""

    def __init__(self, n_in, filters, kernel_size, activation="relu", rng=None, name="conv1d"):
        super().__init__()
        self.name = name
        self.k = kernel_size
        self.activation = activation
        rng = rng or np.random.default_rng(0)
        self.params["W"] = uniform_fan_in(rng, n_in * kernel_size, (kernel_size * n_in, filters))
        self.params["b"] = np.zeros(filters)
        self.zero_grad()

    def forward(self, x, training=False, rng=None):
        n, t, c = x.shape
        t_out = t - self.k + 1
        if t_out < 1:
            raise ValueError(f"{self.name}: input length {t} shorter than kernel {self.k}")
        cols = np.concatenate([x[:, j : j + t_out, :] for j in range(self.k)], axis=2)
        self._shape = x.shape
        self._cols = cols
        z = cols @ self.params["W"] + self.params["b"]
        self._z = z
        return np.maximum(z, 0.0) if self.activation == "relu" else z

    def backward(self, dy):
        dz = dy * (self._z > 0) if self.activation == "relu" else dy
        n, t_out, f = dz.shape
        cols = self._cols
        self.grads["W"] += cols.reshape(-1, cols.shape[2]).T @ dz.reshape(-1, f)
        self.grads["b"] += dz.sum(axis=(0, 1))
        dcols = dz @ self.params["W"].T
        c = self._shape[2]
        dx = np.zeros(self._shape)
        for j in range(self.k):
            dx[:, j : j + t_out, :] += dcols[:, :, j * c : (j + 1) * c]
        return dx


class MaxPool1D(Layer):
    """Non-overlapping temporal max pooling; ties route the gradient to the first maximum."""

    def __init__(self, pool=2, name="maxpool"):
        super().__init__()
        self.name = name
        self.pool = pool

    def forward(self, x, training=False, rng=None):
        n, t, c = x.shape
        t_out = t // self.pool
        self._shape = x.shape
        windows = x[:, : t_out * self.pool, :].reshape(n, t_out, self.pool, c)
        self._arg = windows.argmax(axis=2)
        return windows.max(axis=2)

    def backward(self, dy):
        n, t, c = self._shape
        t_out = dy.shape[1]
        dwin = np.zeros((n, t_out, self.pool, c))
        np.put_along_axis(dwin, self._arg[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros(self._shape)
        dx[:, : t_out * self.pool, :] = dwin.reshape(n, t_out * self.pool, c)
        return dx


class Dropout(Layer):
    """Inverted dropout; identity outside training."""

    def __init__(self, rate, name="dropout"):
        super().__init__()
        self.name = name
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        if not training or self.rate <= 0:
            self._keep = None
            return x
        if rng is None:
            raise ValueError("dropout in training mode needs an rng")
        keep = 1.0 - self.rate
        self._keep = (rng.random(x.shape) < keep) / keep
        return x * self._keep

    def backward(self, dy):
        return dy if self._keep is None else dy * self._keep


class LSTM(Layer):
    """Single-layer LSTM returning the final hidden state.

    Gate order in the fused weights is input, forget, cell, output. Where
    ``mask[b, t]`` is False the step is skipped: hidden and cell state are
    carried over unchanged, so trailing padding has no effect.
    """

    def __init__(self, n_in, units, rng=None, name="lstm"):
        super().__init__()
        self.name = name
        self.units = units
        rng = rng or np.random.default_rng(0)
        self.params["W"] = uniform_fan_in(rng, n_in, (n_in, 4 * units))
        self.params["U"] = uniform_fan_in(rng, units, (units, 4 * units))
        b = np.zeros(4 * units)
        b[units : 2 * units] = 1.0
        self.params["b"] = b
        self.zero_grad()

    def forward(self, x, mask=None, training=False, rng=None):
        n, t, _ = x.shape
        u = self.units
        if mask is not None:
            mask = np.asarray(mask, dtype=bool)
            live = np.flatnonzero(mask.any(axis=0))
            t_eff = int(live[-1]) + 1 if live.size else 0
        else:
            t_eff = t
        self._n, self._t_in = n, x.shape
        self._x = x[:, :t_eff]
        self._mask = None if mask is None else mask[:, :t_eff]
        W, U, b = self.params["W"], self.params["U"], self.params["b"]
        xw = self._x @ W + b if t_eff else np.zeros((n, 0, 4 * u))
        # sigmoid(z) = (1 + tanh(z / 2)) / 2 lets one tanh call serve all four gates
        scale = np.full(4 * u, 0.5)
        scale[2 * u : 3 * u] = 1.0
        xw = xw * scale
        Us = U * scale
        h = np.zeros((n, u))
        c = np.zeros((n, u))
        self._cache = []
        for s in range(t_eff):
            act = np.tanh(xw[:, s] + h @ Us)
            i = 0.5 + 0.5 * act[:, :u]
            f = 0.5 + 0.5 * act[:, u : 2 * u]
            g = act[:, 2 * u : 3 * u]
            o = 0.5 + 0.5 * act[:, 3 * u :]
            c_new = f * c + i * g
            tc = np.tanh(c_new)
            h_new = o * tc
            if self._mask is not None:
                m = self._mask[:, s : s + 1]
                c_new = np.where(m, c_new, c)
                h_new = np.where(m, h_new, h)
            self._cache.append((h, c, i, f, g, o, tc))
            h, c = h_new, c_new
        return h

    def backward(self, dh):
        u = self.units
        n, t_in, n_in = self._t_in
        t_eff = self._x.shape[1]
        U = self.params["U"]
        dz_all = np.zeros((n, t_eff, 4 * u))
        h_prev_all = np.zeros((n, t_eff, u))
        dc = np.zeros((n, u))
        for s in range(t_eff - 1, -1, -1):
            h_prev, c_prev, i, f, g, o, tc = self._cache[s]
            if self._mask is not None:
                m = self._mask[:, s : s + 1]
                dh_live = np.where(m, dh, 0.0)
                dc_live = np.where(m, dc, 0.0)
            else:
                m = None
                dh_live, dc_live = dh, dc
            do = dh_live * tc
            dct = dc_live + dh_live * o * (1.0 - tc**2)
            di = dct * g
            dg = dct * i
            df = dct * c_prev
            dz = np.concatenate(
                [di * i * (1 - i), df * f * (1 - f), dg * (1 - g**2), do * o * (1 - o)], axis=1
            )
            dz_all[:, s] = dz
            h_prev_all[:, s] = h_prev
            dh_prev = dz @ U.T
            dc_prev = dct * f
            if m is not None:
                dh = np.where(m, dh_prev, dh)
                dc = np.where(m, dc_prev, dc)
            else:
                dh, dc = dh_prev, dc_prev
        flat_dz = dz_all.reshape(-1, 4 * u)
        self.grads["W"] += self._x.reshape(-1, n_in).T @ flat_dz
        self.grads["U"] += h_prev_all.reshape(-1, u).T @ flat_dz
        self.grads["b"] += flat_dz.sum(axis=0)
        dx = np.zeros(self._t_in)
        dx[:, :t_eff] = dz_all @ self.params["W"].T
        return dx
