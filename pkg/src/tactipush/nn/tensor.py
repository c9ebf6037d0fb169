"""Minimal reverse-mode autodiff over numpy arrays (NCHW layout for images)."""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=float, copy=True)
        else:
            self.grad += g

    def backward(self, grad=None):
        if grad is None:
            grad = np.ones_like(self.data)
        order = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self._accum(grad)
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # arithmetic sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(as_tensor(other), neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g, b.shape))

    return Tensor(a.data + b.data, _parents=(a, b), _backward=bw)


def neg(a):
    return Tensor(-a.data, _parents=(a,), _backward=lambda g: a._accum(-g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(_unbroadcast(g * b.data, a.shape))
        if b.requires_grad:
            b._accum(_unbroadcast(g * a.data, b.shape))

    return Tensor(a.data * b.data, _parents=(a, b), _backward=bw)


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        if a.requires_grad:
            a._accum(g @ b.data.T)
        if b.requires_grad:
            b._accum(a.data.T @ g)

    return Tensor(a.data @ b.data, _parents=(a, b), _backward=bw)


def identity(a):
    return Tensor(a.data.copy(), _parents=(a,), _backward=lambda g: a._accum(g))


def relu(a):
    mask = a.data > 0
    return Tensor(a.data * mask, _parents=(a,), _backward=lambda g: a._accum(g * mask))


def tanh(a):
    y = np.tanh(a.data)
    return Tensor(y, _parents=(a,), _backward=lambda g: a._accum(g * (1.0 - y * y)))


def sigmoid(a):
    y = 0.5 * (1.0 + np.tanh(0.5 * a.data))
    return Tensor(y, _parents=(a,), _backward=lambda g: a._accum(g * y * (1.0 - y)))


def clip(a, lo, hi):
    """Clamp to [lo, hi]; gradient passes only where the input is strictly inside."""
    inside = (a.data > lo) & (a.data < hi)
    return Tensor(np.clip(a.data, lo, hi), _parents=(a,), _backward=lambda g: a._accum(g * inside))


def reshape(a, shape):
    old = a.shape
    return Tensor(a.data.reshape(shape), _parents=(a,), _backward=lambda g: a._accum(g.reshape(old)))


def concat(tensors, axis=1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, part in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accum(part)

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors), _backward=bw)


def split(a, n, axis=1):
    """Split into ``n`` equal chunks along ``axis``."""
    size = a.shape[axis] // n
    outs = []
    for i in range(n):
        idx = [slice(None)] * a.data.ndim
        idx[axis] = slice(i * size, (i + 1) * size)
        idx = tuple(idx)

        def bw(g, idx=idx):
            full = np.zeros_like(a.data)
            full[idx] = g
            a._accum(full)

        outs.append(Tensor(a.data[idx], _parents=(a,), _backward=bw))
    return outs


def sum_all(a):
    return Tensor(a.data.sum(), _parents=(a,), _backward=lambda g: a._accum(np.broadcast_to(g, a.shape)))


def mean_all(a):
    n = a.data.size
    return Tensor(a.data.mean(), _parents=(a,), _backward=lambda g: a._accum(np.broadcast_to(g / n, a.shape)))


def mse(pred, target):
    target = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=float)
    diff = pred.data - target
    n = diff.size
    return Tensor(np.mean(diff * diff), _parents=(pred,), _backward=lambda g: pred._accum(g * 2.0 * diff / n))


def conv2d(x, w, b=None, stride=1, padding=0):
    """2-D cross-correlation; x (N,C,H,W), w (O,C,kh,kw)."""
    x, w = as_tensor(x), as_tensor(w)
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    p = padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    ho, wo = win.shape[2], win.shape[3]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw)
    wmat = w.data.reshape(o, -1)
    out = cols @ wmat.T
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
    out = out.reshape(n, ho, wo, o).transpose(0, 3, 1, 2)
    parents = (x, w) if b is None else (x, w, b)

    def bw(g):
        gf = g.transpose(0, 2, 3, 1).reshape(n * ho * wo, o)
        if w.requires_grad:
            w._accum((gf.T @ cols).reshape(w.shape))
        if b is not None and b.requires_grad:
            b._accum(gf.sum(axis=0))
        if x.requires_grad:
            gcols = (gf @ wmat).reshape(n, ho, wo, c, kh, kw)
            gxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            x._accum(gxp[:, :, p:p + h, p:p + wd] if p else gxp)

    return Tensor(np.ascontiguousarray(out), _parents=parents, _backward=bw)


def maxpool2d(x):
    """2x2 max pooling with stride 2."""
    n, c, h, w = x.shape
    blocks = x.data.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    arg = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def bw(g):
        gb = np.zeros_like(blocks)
        np.put_along_axis(gb, arg[..., None], g[..., None], axis=-1)
        gx = gb.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)
        x._accum(gx)

    return Tensor(out, _parents=(x,), _backward=bw)


def upsample2d(x):
    """Nearest-neighbour 2x upsampling."""
    n, c, h, w = x.shape
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)

    def bw(g):
        x._accum(g.reshape(n, c, h, 2, w, 2).sum(axis=(3, 5)))

    return Tensor(out, _parents=(x,), _backward=bw)


def tile_vector(v, h, w):
    """Broadcast (N, K) to (N, K, h, w)."""
    v = as_tensor(v)
    out = np.broadcast_to(v.data[:, :, None, None], v.shape + (h, w)).copy()
    return Tensor(out, _parents=(v,), _backward=lambda g: v._accum(g.sum(axis=(2, 3))))
