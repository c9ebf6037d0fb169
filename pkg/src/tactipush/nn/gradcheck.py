"""Finite-difference verification of reverse-mode gradients."""
from __future__ import annotations

import numpy as np

from ..errors import ValidationError
from . import tensor as T
from .layers import ConvLSTMCell, Conv2d, Dense
from .tensor import Tensor


def _numeric_grad(fn, t, r, h):
    g = np.zeros_like(t.data)
    for idx in np.ndindex(t.data.shape):
        old = t.data[idx]
        t.data[idx] = old + h
        fp = float((fn().data * r).sum())
        t.data[idx] = old - h
        fm = float((fn().data * r).sum())
        t.data[idx] = old
        g[idx] = (fp - fm) / (2.0 * h)
    return g


def check_gradients(fn, tensors, rng, h=1e-5):
    """Max relative error between analytic and central-difference gradients.

    ``fn`` rebuilds the graph from the current ``tensors`` values. The scalar
    probed is ``sum(r * fn())`` for a fixed random ``r``. Relative error is
    measured per tensor against its largest gradient entry.
    """
    out = fn()
    r = rng.normal(size=out.shape)
    for t in tensors:
        t.grad = None
    T.sum_all(T.mul(out, Tensor(r))).backward()
    worst = 0.0
    for t in tensors:
        ga = np.zeros_like(t.data) if t.grad is None else t.grad.copy()
        gn = _numeric_grad(fn, t, r, h)
        scale = max(np.abs(ga).max(), np.abs(gn).max(), 1e-30)
        worst = max(worst, float(np.abs(ga - gn).max() / scale))
    return worst


def _input(rng, shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def grad_check(spec: dict, rng, h=1e-5):
    """Gradient check for one layer described by ``spec``.

    Supported kinds: dense, conv, convlstm, identity, relu, tanh, sigmoid,
    clip, maxpool, upsample.
    """
    kind = spec["kind"]
    batch = spec.get("batch", 2)
    if kind == "dense":
        layer = Dense(spec["in"], spec["out"], rng)
        x = _input(rng, (batch, spec["in"]))

        def fn():
            return layer(x)
    elif kind == "conv":
        layer = Conv2d(spec["in_channels"], spec["out_channels"], spec.get("kernel", 3), rng,
                       stride=spec.get("stride", 1))
        s = spec["size"]
        x = _input(rng, (batch, spec["in_channels"], s, s))

        def fn():
            return layer(x)
    elif kind == "convlstm":
        layer = ConvLSTMCell(spec["in_channels"], spec["hidden"], spec.get("kernel", 3), rng)
        s = spec["size"]
        x = _input(rng, (batch, spec["in_channels"], s, s))
        h0 = _input(rng, (batch, spec["hidden"], s, s))
        c0 = _input(rng, (batch, spec["hidden"], s, s))

        def fn():
            out, (_, c) = layer(x, (h0, c0))
            return T.concat([out, c], axis=1)

        tensors = [x, h0, c0] + layer.parameters()
        _limit(tensors)
        return check_gradients(fn, tensors, rng, h)
    elif kind in ("identity", "relu", "tanh", "sigmoid"):
        op = getattr(T, kind)
        x = _input(rng, (batch, spec.get("size", 8)))
        if kind == "relu":
            # keep samples away from the kink
            x.data += np.sign(x.data) * 0.1
        layer = None

        def fn():
            return op(x)
    elif kind == "clip":
        x = _input(rng, (batch, spec.get("size", 8)))
        # both sides of each bound, none within finite-difference reach of it
        near = np.abs(np.abs(x.data) - 1.0) < 0.05
        x.data[near] += 0.1 * np.sign(x.data[near])
        layer = None

        def fn():
            return T.clip(x, -1.0, 1.0)
    elif kind in ("maxpool", "upsample"):
        op = T.maxpool2d if kind == "maxpool" else T.upsample2d
        s = spec.get("size", 8)
        x = _input(rng, (batch, spec.get("channels", 2), s, s))
        layer = None

        def fn():
            return op(x)
    else:
        raise ValidationError(f"unknown layer kind {kind!r}")
    tensors = [x] + ([] if layer is None else layer.parameters())
    _limit(tensors)
    return check_gradients(fn, tensors, rng, h)


def _limit(tensors):
    n = sum(t.data.size for t in tensors)
    if n > 10_000:
        raise ValidationError(f"gradient check limited to 1e4 parameters, got {n}")
