"""Minimal NumPy convolutional network with explicit backpropagation and Adam.

Tensors are laid out as (batch, channels, height, width). Everything runs in
float64 so finite-difference checks stay meaningful.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Layer:
    params: dict
    grads: dict

    def __init__(self):
        self.params = {}
        self.grads = {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape

    def spec(self) -> dict:
        return {"type": type(self).__name__}


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Conv2D(Layer):
    """Stride-1 'same' convolution. ``kernel`` is an odd int or an odd (rows, cols) pair."""

    def __init__(self, in_channels, out_channels, kernel=3, rng=None):
        super().__init__()
        kh, kw = (kernel, kernel) if np.isscalar(kernel) else tuple(kernel)
        if kh % 2 != 1 or kw % 2 != 1:
            raise ValueError("kernel sizes must be odd for same padding")
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel = (int(kh), int(kw))
        rng = rng if rng is not None else np.random.default_rng(0)
        area = kh * kw
        self.params["W"] = _glorot(rng, (out_channels, in_channels, kh, kw),
                                   in_channels * area, out_channels * area)
        self.params["b"] = np.zeros(out_channels)

    def spec(self):
        return {"type": "Conv2D", "in_channels": self.in_channels,
                "out_channels": self.out_channels, "kernel": list(self.kernel)}

    def output_shape(self, shape):
        return (self.out_channels, shape[1], shape[2])

    @staticmethod
    def _im2col(x, kernel):
        B, C, H, W = x.shape
        kh, kw = kernel
        xp = np.pad(x, ((0, 0), (0, 0), (kh // 2, kh // 2), (kw // 2, kw // 2)))
        win = sliding_window_view(xp, (kh, kw), axis=(2, 3))          # B,C,H,W,kh,kw
        return win.transpose(0, 2, 3, 1, 4, 5).reshape(B * H * W, C * kh * kw)

    def forward(self, x):
        B, C, H, W = x.shape
        cols = self._im2col(x, self.kernel)
        wmat = self.params["W"].reshape(self.out_channels, -1)
        out = cols @ wmat.T + self.params["b"]
        self._cache = (x.shape, cols)
        return out.reshape(B, H, W, self.out_channels).transpose(0, 3, 1, 2)

    def backward(self, dout):
        (B, C, H, W), cols = self._cache
        d2 = dout.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        self.grads["W"] = (d2.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = d2.sum(axis=0)
        kh, kw = self.kernel
        if self.out_channels <= C:
            # same-padded correlation of dout with the flipped, transposed kernel
            flipped = self.params["W"][:, :, ::-1, ::-1].transpose(1, 0, 2, 3).reshape(C, -1)
            dx = self._im2col(dout, self.kernel) @ flipped.T
            return dx.reshape(B, H, W, C).transpose(0, 3, 1, 2)
        # few input channels: scatter the column gradient back instead
        dcols = (d2 @ self.params["W"].reshape(self.out_channels, -1)).reshape(B, H, W, C, kh, kw)
        dxp = np.zeros((B, C, H + kh - 1, W + kw - 1))
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + H, j:j + W] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return dxp[:, :, kh // 2:kh // 2 + H, kw // 2:kw // 2 + W]


class AvgPool2D(Layer):
    """Non-overlapping average pooling; trailing rows/columns that do not fill a window are dropped."""

    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def spec(self):
        return {"type": "AvgPool2D", "size": self.size}

    def output_shape(self, shape):
        return (shape[0], shape[1] // self.size, shape[2] // self.size)

    def forward(self, x):
        B, C, H, W = x.shape
        s = self.size
        h2, w2 = H // s, W // s
        self._shape = x.shape
        return x[:, :, :h2 * s, :w2 * s].reshape(B, C, h2, s, w2, s).mean(axis=(3, 5))

    def backward(self, dout):
        s = self.size
        dx = np.zeros(self._shape)
        h2, w2 = dout.shape[2], dout.shape[3]
        up = np.repeat(np.repeat(dout, s, axis=2), s, axis=3) / (s * s)
        dx[:, :, :h2 * s, :w2 * s] = up
        return dx


class Flatten(Layer):
    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._shape)


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None):
        super().__init__()
        rng = rng if rng is not None else np.random.default_rng(0)
        self.n_in, self.n_out = n_in, n_out
        self.params["W"] = _glorot(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.zeros(n_out)

    def spec(self):
        return {"type": "Dense", "n_in": self.n_in, "n_out": self.n_out}

    def output_shape(self, shape):
        return (self.n_out,)

    def forward(self, x):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dout):
        self.grads["W"] = self._x.T @ dout
        self.grads["b"] = dout.sum(axis=0)
        return dout @ self.params["W"].T


class Tanh(Layer):
    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dout):
        return dout * (1.0 - self._y ** 2)


class Sigmoid(Layer):
    def forward(self, x):
        # tanh form avoids overflow warnings for large |x|
        self._y = 0.5 * (1.0 + np.tanh(0.5 * x))
        return self._y

    def backward(self, dout):
        return dout * self._y * (1.0 - self._y)


_LAYER_TYPES = {cls.__name__: cls for cls in (Conv2D, AvgPool2D, Flatten, Dense, Tanh, Sigmoid)}


def layer_from_spec(spec: dict) -> Layer:
    spec = dict(spec)
    cls = _LAYER_TYPES[spec.pop("type")]
    return cls(**spec)


class Sequential:
    def __init__(self, layers, input_shape):
        self.layers = list(layers)
        self.input_shape = tuple(input_shape)

    def forward(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[1:] != self.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match network {self.input_shape}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout):
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def parameters(self):
        """``(key, layer, name)`` for every trainable array, in a fixed order."""
        return [(f"{i}.{name}", layer, name)
                for i, layer in enumerate(self.layers) for name in layer.params]

    def get_weights(self) -> dict:
        return {key: layer.params[name].copy() for key, layer, name in self.parameters()}

    def set_weights(self, weights: dict) -> None:
        for key, layer, name in self.parameters():
            if weights[key].shape != layer.params[name].shape:
                raise ValueError(f"weight {key} has shape {weights[key].shape}")
            layer.params[name] = np.array(weights[key], dtype=float)

    @property
    def output_size(self) -> int:
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        return shape[0]


def mse_loss(pred, target):
    """Mean squared error over batch and outputs, with its gradient."""
    diff = pred - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {}
        self.v = {}
        self.step_count = 0

    def step(self, net: Sequential):
        self.step_count += 1
        t = self.step_count
        for key, layer, name in net.parameters():
            g = layer.grads[name]
            if key not in self.m:
                self.m[key] = np.zeros_like(g)
                self.v[key] = np.zeros_like(g)
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            m_hat = self.m[key] / (1 - self.beta1 ** t)
            v_hat = self.v[key] / (1 - self.beta2 ** t)
            layer.params[name] = layer.params[name] - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
