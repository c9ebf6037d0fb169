"""Direct state-space forecaster: a small MLP from (s, actions) to future s."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ModelNotReadyError, ValidationError
from ..nn import tensor as T
from ..nn.checkpoint import load as load_ckpt, save as save_ckpt
from ..nn.layers import Dense, Module
from ..nn.train import TrainingCurve, fit
from .base import ForecastResult, Predictor, PredictorConfig, check_lengths, relative_actions
from .windows import WindowSet


@dataclass(frozen=True)
class StateTfmHyperparams:
    hidden: tuple = (64, 64)
    epochs: int = 40
    batch_size: int = 64
    lr: float = 1e-3
    validation_fraction: float = 0.2


class _Mlp(Module):
    def __init__(self, n_in, hidden, n_out, rng):
        sizes = (n_in,) + tuple(hidden)
        self.layers = [Dense(a, b, rng) for a, b in zip(sizes[:-1], sizes[1:])]
        self.head = Dense(sizes[-1], n_out, rng, gain=0.1)

    def __call__(self, x):
        for layer in self.layers:
            x = T.relu(layer(x))
        return self.head(x)


class StateTfm(Predictor):
    """Predicts horizon displacements of s relative to the last measurement.

    Inputs: context s relative to its last value, the last value itself and
    the context + planned poses expressed in the last context pose's frame,
    all scaled by training-set statistics.
    """

    kind = "state"

    def __init__(self, config: PredictorConfig = PredictorConfig(), hidden=(64, 64), rng=None):
        super().__init__(config)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.hidden = tuple(hidden)
        c, H = config.context, config.horizon
        self.n_in = c + 1 + 6 * (c + H)
        self.net = _Mlp(self.n_in, self.hidden, H, rng)
        self.action_scale = np.ones(6)
        self.s_scale = 1.0
        self.ready = False
        self.curve = None

    def encode_actions(self, poses_ctx, planned):
        n = len(poses_ctx)
        out = np.empty((n, self.config.total, 6))
        for i in range(n):
            out[i] = relative_actions(np.concatenate([poses_ctx[i], planned[i]]), poses_ctx[i][-1])
        return out

    def features(self, s_ctx, actions):
        s_ctx = np.asarray(s_ctx, dtype=float)
        last = s_ctx[:, -1:]
        a = (actions / self.action_scale).reshape(len(s_ctx), -1)
        return np.concatenate([(s_ctx - last) / self.s_scale, last - 0.5, a], axis=1)

    def _forward(self, X):
        return self.net(T.Tensor(X))

    def predict_windows(self, s_ctx, poses_ctx, planned, actions=None):
        if actions is None:
            actions = self.encode_actions(poses_ctx, planned)
        X = self.features(s_ctx, actions)
        d = self._forward(X).data * self.s_scale
        return np.clip(np.asarray(s_ctx)[:, -1:] + d, 0.0, 1.0)

    def forecast(self, ctx):
        if not self.ready:
            raise ModelNotReadyError("state forecaster is not trained")
        check_lengths(self.config, ctx)
        s_hat = self.predict_windows(ctx.s[None], ctx.poses[None], ctx.planned[None])[0]
        return ForecastResult(s_hat, self.kind)

    def flops(self):
        sizes = (self.n_in,) + self.hidden + (self.config.horizon,)
        return float(sum(2 * a * b for a, b in zip(sizes[:-1], sizes[1:])))

    # persistence -------------------------------------------------------
    def state_dict_full(self):
        d = {"net." + k: v for k, v in self.net.state_dict().items()}
        d["action_scale"] = self.action_scale
        d["s_scale"] = np.array([self.s_scale])
        return d

    def save(self, path, config_hash):
        save_ckpt(path, self.state_dict_full(), kind="state_tfm", config_hash=config_hash,
                  extra={"context": self.config.context, "horizon": self.config.horizon,
                         "frame_hz": self.config.frame_hz, "hidden": list(self.hidden)})

    @classmethod
    def load(cls, path, config_hash=None):
        tensors, header = load_ckpt(path, kind="state_tfm", config_hash=config_hash)
        e = header["extra"]
        model = cls(PredictorConfig(e["context"], e["horizon"], e["frame_hz"]), e["hidden"])
        model.net.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("net.")})
        model.action_scale = tensors["action_scale"]
        model.s_scale = float(tensors["s_scale"][0])
        model.ready = True
        return model


def split_groups(groups, fraction, rng):
    uniq = np.unique(groups)
    n_val = int(round(fraction * len(uniq)))
    if n_val == 0:
        return np.arange(len(groups)), np.zeros(0, dtype=int)
    held = rng.choice(uniq, size=n_val, replace=False)
    mask = np.isin(groups, held)
    return np.flatnonzero(~mask), np.flatnonzero(mask)


def train_state_tfm(windows: WindowSet, config: PredictorConfig = PredictorConfig(),
                    hp: StateTfmHyperparams = StateTfmHyperparams(), rng=None, split=None):
    """Fit a StateTfm by MSE on horizon displacements; validation by rollout."""
    rng = rng if rng is not None else np.random.default_rng(0)
    if windows.s_ctx.shape[1] != config.context or windows.target.shape[1] != config.horizon:
        raise ValidationError("window shapes do not match the predictor config")
    model = StateTfm(config, hp.hidden, rng)
    actions = model.encode_actions(windows.poses_ctx, windows.planned)
    tr, va = split if split is not None else split_groups(windows.group, hp.validation_fraction, rng)
    scale = actions[tr].reshape(-1, 6).std(axis=0)
    model.action_scale = np.where(scale > 1e-9, scale, 1.0)
    dy = windows.target - windows.s_ctx[:, -1:]
    model.s_scale = float(max(np.abs(dy[tr]).std(), 1e-3))
    X = model.features(windows.s_ctx, actions)
    Y = dy / model.s_scale

    def batch_loss(idx, epoch):
        sel = tr[idx]
        return T.mse(model._forward(X[sel]), T.Tensor(Y[sel]))

    def validate():
        pred = np.clip(windows.s_ctx[va, -1:] + model._forward(X[va]).data * model.s_scale, 0, 1)
        return float(np.abs(pred - windows.target[va]).mean())

    curve = fit(model.net.parameters(), len(tr), batch_loss, epochs=hp.epochs, batch_size=hp.batch_size,
                lr=hp.lr, rng=rng, validate=validate if len(va) else None, curve=TrainingCurve())
    model.curve = curve
    model.split = (tr, va)
    model.ready = True
    return model
