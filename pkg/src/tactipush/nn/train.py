"""Mini-batch training loop shared by the CLM and the forecasters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..errors import TrainingFailedError
from .optim import Adam


@dataclass
class TrainingCurve:
    train: List[float] = field(default_factory=list)
    validation: List[float] = field(default_factory=list)

    def as_dict(self):
        return {"train": list(self.train), "validation": list(self.validation)}


def fit(params, n_samples, batch_loss, *, epochs, batch_size, lr, rng, clip_norm=5.0,
        validate=None, on_epoch=None, curve=None, lr_decay=1.0):
    """Train ``params`` with Adam.

    ``batch_loss(idx, epoch)`` builds a scalar loss Tensor for sample indices
    ``idx``. ``validate()`` returns a float logged after each epoch. The
    learning rate is multiplied by ``lr_decay`` after every epoch.
    Non-finite loss raises TrainingFailedError carrying the last finite value.
    """
    opt = Adam(params, lr=lr, clip_norm=clip_norm)
    curve = curve or TrainingCurve()
    last_finite = None
    for epoch in range(epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, batch_size):
            idx = order[start:start + batch_size]
            opt.zero_grad()
            loss = batch_loss(idx, epoch)
            value = float(loss.data)
            if not math.isfinite(value):
                raise TrainingFailedError(f"loss became non-finite in epoch {epoch}", last_finite)
            last_finite = value
            loss.backward()
            opt.step()
            total += value * len(idx)
        curve.train.append(total / n_samples)
        if validate is not None:
            curve.validation.append(float(validate()))
        if on_epoch is not None:
            on_epoch(epoch)
        opt.lr *= lr_decay
    return curve


def batched(fn, x, batch=64):
    """Apply ``fn`` to leading-axis chunks of ``x`` and concatenate."""
    outs = [np.asarray(fn(x[i:i + batch])) for i in range(0, len(x), batch)]
    return np.concatenate(outs, axis=0) if outs else np.zeros((0,))
