"""Layers with explicit forward/backward passes.

Activations are channels-last: ``(batch, length, channels)`` for the 1-D stack and
``(batch, features)`` after flattening.  In inference mode (``train=False``) no
layer writes to itself, so one model can serve several threads.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params, self.grads = {}, {}
        self._cache = None

    def output_shape(self, shape: tuple) -> tuple:
        return shape

    def forward(self, x, train=False):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def buffers(self) -> dict:
        """Non-trainable state that must survive a checkpoint round trip."""
        return {}


class Conv1D(Layer):
    """Valid (unpadded) 1-D convolution; weight stored as a (in*k, out) matrix."""

    def __init__(self, in_channels, out_channels, kernel, dtype=np.float32):
        super().__init__()
        self.k, self.cin, self.cout = kernel, in_channels, out_channels
        self.params = {"W": np.zeros((in_channels * kernel, out_channels), dtype),
                       "b": np.zeros(out_channels, dtype)}

    def output_shape(self, shape):
        length, _ = shape
        return (length - self.k + 1, self.cout)

    def forward(self, x, train=False):
        B, L, C = x.shape
        L2 = L - self.k + 1
        cols = sliding_window_view(x, self.k, axis=1).reshape(B * L2, C * self.k)
        y = cols @ self.params["W"] + self.params["b"]
        if train:
            self._cache = (cols, x.shape)
        return y.reshape(B, L2, self.cout)

    def backward(self, dout):
        cols, (B, L, C) = self._cache
        L2 = L - self.k + 1
        d2 = dout.reshape(B * L2, self.cout)
        self.grads["W"] = cols.T @ d2
        self.grads["b"] = d2.sum(axis=0)
        # one matmul per kernel tap keeps every operand contiguous
        W = self.params["W"].reshape(C, self.k, self.cout)
        dx = np.zeros((B, L, C), dtype=dout.dtype)
        for j in range(self.k):
            dx[:, j:j + L2, :] += (d2 @ W[:, j, :].T).reshape(B, L2, C)
        return dx


class Dense(Layer):
    def __init__(self, in_features, units, dtype=np.float32):
        super().__init__()
        self.params = {"W": np.zeros((in_features, units), dtype), "b": np.zeros(units, dtype)}
        self.units = units

    def output_shape(self, shape):
        return (self.units,)

    def forward(self, x, train=False):
        if train:
            self._cache = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        x = self._cache
        self.grads["W"] = x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class MaxPool1D(Layer):
    def __init__(self, pool):
        super().__init__()
        self.p = pool

    def output_shape(self, shape):
        length, c = shape
        return (length // self.p, c)

    def forward(self, x, train=False):
        B, L, C = x.shape
        L2 = L // self.p
        xr = x[:, :L2 * self.p].reshape(B, L2, self.p, C)
        if not train:
            return xr.max(axis=2)
        if self.p == 2:
            first = xr[:, :, 0, :] >= xr[:, :, 1, :]
            self._cache = (first, x.shape)
            return np.where(first, xr[:, :, 0, :], xr[:, :, 1, :])
        idx = xr.argmax(axis=2)[:, :, None, :]
        self._cache = (idx, x.shape)
        return np.take_along_axis(xr, idx, axis=2)[:, :, 0, :]

    def backward(self, dout):
        idx, (B, L, C) = self._cache
        L2 = L // self.p
        dxr = np.zeros((B, L2, self.p, C), dtype=dout.dtype)
        if self.p == 2:
            dxr[:, :, 0, :] = dout * idx
            dxr[:, :, 1, :] = dout * ~idx
        else:
            np.put_along_axis(dxr, idx, dout[:, :, None, :], axis=2)
        dx = np.zeros((B, L, C), dtype=dout.dtype)
        dx[:, :L2 * self.p] = dxr.reshape(B, L2 * self.p, C)
        return dx


class ReLU(Layer):
    def forward(self, x, train=False):
        if train:
            self._cache = x > 0
        return np.maximum(x, 0)

    def backward(self, dout):
        return dout * self._cache


class Dropout(Layer):
    """Inverted dropout; identity outside training and for rate 0."""

    def __init__(self, rate, seed=0):
        super().__init__()
        self.rate = rate
        self.rng = np.random.default_rng(seed)

    def forward(self, x, train=False):
        if not train or self.rate == 0:
            self._cache = None
            return x
        keep = (self.rng.random(x.shape, dtype=np.float32) >= self.rate) * x.dtype.type(1 / (1 - self.rate))
        self._cache = keep
        return x * keep

    def backward(self, dout):
        return dout if self._cache is None else dout * self._cache


class BatchNorm(Layer):
    """Normalises over every axis but the last one."""

    def __init__(self, channels, momentum=0.1, eps=1e-5, dtype=np.float32):
        super().__init__()
        self.params = {"gamma": np.ones(channels, dtype), "beta": np.zeros(channels, dtype)}
        self.running_mean = np.zeros(channels, dtype)
        self.running_var = np.ones(channels, dtype)
        self.momentum, self.eps = momentum, eps

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def forward(self, x, train=False):
        axes = tuple(range(x.ndim - 1))
        if not train:
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            return (x - self.running_mean) * (inv * self.params["gamma"]) + self.params["beta"]
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        inv = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv
        m = self.momentum
        self.running_mean[...] = (1 - m) * self.running_mean + m * mean
        self.running_var[...] = (1 - m) * self.running_var + m * var
        self._cache = (xhat, inv, axes)
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, dout):
        xhat, inv, axes = self._cache
        n = dout.dtype.type(np.prod([dout.shape[a] for a in axes]))
        self.grads["gamma"] = (dout * xhat).sum(axis=axes)
        self.grads["beta"] = dout.sum(axis=axes)
        dxhat = dout * self.params["gamma"]
        return (inv / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class Flatten(Layer):
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, train=False):
        if train:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._cache)
