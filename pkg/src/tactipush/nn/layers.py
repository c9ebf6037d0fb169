"""Parameterized layers built on ``nn.tensor``."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor


class Module:
    def named_parameters(self, prefix=""):
        out = {}
        for name, value in vars(self).items():
            if isinstance(value, Tensor) and value.requires_grad:
                out[prefix + name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(prefix + name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{prefix}{name}.{i}."))
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def state_dict(self):
        return {k: v.data.copy() for k, v in self.named_parameters().items()}

    def load_state_dict(self, state):
        params = self.named_parameters()
        missing = set(params) - set(state)
        if missing:
            raise KeyError(f"missing parameters: {sorted(missing)}")
        for k, p in params.items():
            if state[k].shape != p.data.shape:
                raise ValueError(f"shape mismatch for {k}: {state[k].shape} vs {p.data.shape}")
            p.data = np.array(state[k], dtype=float)

    def n_parameters(self):
        return sum(p.data.size for p in self.parameters())


def _param(x):
    return Tensor(x, requires_grad=True)


class Dense(Module):
    def __init__(self, n_in, n_out, rng, gain=2.0):
        self.weight = _param(rng.normal(0.0, np.sqrt(gain / n_in), size=(n_in, n_out)))
        self.bias = _param(np.zeros(n_out))

    def __call__(self, x):
        return T.add(T.matmul(x, self.weight), self.bias)


class Conv2d(Module):
    def __init__(self, c_in, c_out, kernel, rng, stride=1, padding=None, gain=2.0):
        fan_in = c_in * kernel * kernel
        self.weight = _param(rng.normal(0.0, np.sqrt(gain / fan_in), size=(c_out, c_in, kernel, kernel)))
        self.bias = _param(np.zeros(c_out))
        self.stride = stride
        self.padding = kernel // 2 if padding is None else padding

    def __call__(self, x):
        return T.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class ConvLSTMCell(Module):
    """Convolutional LSTM cell; gate order (input, forget, output, candidate)."""

    def __init__(self, c_in, hidden, kernel, rng):
        self.hidden = hidden
        self.conv = Conv2d(c_in + hidden, 4 * hidden, kernel, rng, gain=1.0)
        b = self.conv.bias.data
        b[hidden:2 * hidden] = 1.0

    def initial_state(self, n, h, w):
        z = np.zeros((n, self.hidden, h, w))
        return Tensor(z), Tensor(z.copy())

    def __call__(self, x, state):
        h, c = state
        gates = self.conv(T.concat([x, h], axis=1))
        i, f, o, g = T.split(gates, 4, axis=1)
        c_new = T.add(T.mul(T.sigmoid(f), c), T.mul(T.sigmoid(i), T.tanh(g)))
        h_new = T.mul(T.sigmoid(o), T.tanh(c_new))
        return h_new, (h_new, c_new)
