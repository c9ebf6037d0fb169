"""Action-conditioned video forecaster: conv encoder, ConvLSTM core, conv decoder."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..errors import ModelNotReadyError, ValidationError
from ..nn import tensor as T
from ..nn.checkpoint import load as load_ckpt, save as save_ckpt
from ..nn.layers import Conv2d, ConvLSTMCell, Module
from ..nn.train import TrainingCurve, fit
from .base import ForecastResult, Predictor, PredictorConfig, check_lengths, relative_actions

N_ACTION = 6


def step_actions(poses):
    """Per-frame pose increments: row t is pose t in the frame of pose t-1 (row 0 is zero)."""
    poses = np.asarray(poses)
    out = np.zeros((len(poses), N_ACTION))
    for t in range(1, len(poses)):
        out[t] = relative_actions(poses[t:t + 1], poses[t - 1])[0]
    return out


def _nchw(frames):
    return np.ascontiguousarray(np.asarray(frames, dtype=float).transpose(0, 3, 1, 2))


def _nhwc(x):
    return x.transpose(0, 2, 3, 1)


class _Net(Module):
    def __init__(self, channels, hidden, rng):
        c1, c2 = channels
        self.enc1 = Conv2d(3, c1, 3, rng)
        self.enc2 = Conv2d(c1, c2, 3, rng)
        self.lstm1 = ConvLSTMCell(c2 + N_ACTION, hidden, 3, rng)
        self.lstm2 = ConvLSTMCell(hidden, hidden, 3, rng)
        self.dec1 = Conv2d(hidden, c1, 3, rng)
        self.dec2 = Conv2d(c1, 3, 3, rng, gain=0.01)

    def initial_state(self, n, h, w):
        return [self.lstm1.initial_state(n, h // 4, w // 4), self.lstm2.initial_state(n, h // 4, w // 4)]

    def step(self, x, a, state):
        """One frame ahead. ``x`` is an NCHW array in [0, 1], ``a`` (N, 6) scaled actions."""
        e = T.maxpool2d(T.relu(self.enc1(T.Tensor(x))))
        e = T.maxpool2d(T.relu(self.enc2(e)))
        z = T.concat([e, T.tile_vector(T.Tensor(a), e.shape[2], e.shape[3])], axis=1)
        h1, s1 = self.lstm1(z, state[0])
        h2, s2 = self.lstm2(h1, state[1])
        d = T.relu(self.dec1(T.upsample2d(h2)))
        d = self.dec2(T.upsample2d(d))
        # input skip: tanh bounds the per-pixel change to [-1, 1]
        out = T.clip(T.add(T.Tensor(x), T.tanh(d)), 0.0, 1.0)
        return out, [s1, s2]


@dataclass(frozen=True)
class ImageTfmHyperparams:
    channels: tuple = (8, 16)
    hidden: int = 16
    epochs: int = 9
    batch_size: int = 4
    lr: float = 2e-3
    lr_decay: float = 0.8
    stride: int = 4
    max_windows: int = 240
    validation_fraction: float = 0.2


class ImageTfm(Predictor):
    """Predicts future tactile frames, then locates contact on them with a CLM."""

    kind = "image"

    def __init__(self, config: PredictorConfig = PredictorConfig(), resolution=32, channels=(8, 16),
                 hidden=16, rng=None, clm=None):
        super().__init__(config)
        if resolution % 4:
            raise ValidationError("image forecaster resolution must be divisible by 4")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.resolution = int(resolution)
        self.channels = tuple(channels)
        self.hidden = int(hidden)
        self.net = _Net(self.channels, self.hidden, rng)
        self.action_scale = np.ones(N_ACTION)
        self.clm = clm
        self.ready = False
        self.curve = None

    def rollout_frames(self, frames, actions, n_future):
        """Teacher-force ``frames`` (N, k, H, W, 3), then generate ``n_future`` frames.

        ``actions`` (N, >= k + n_future, 6) are raw step increments; row t
        drives the transition into frame t.
        """
        frames = np.asarray(frames, dtype=float)
        n, k, h, w, _ = frames.shape
        if h != self.resolution or w != self.resolution:
            raise ValidationError(f"frames are {h}x{w}, model expects {self.resolution}x{self.resolution}")
        a = np.asarray(actions, dtype=float) / self.action_scale
        if a.shape[1] < k + n_future:
            raise ValidationError("not enough actions for the requested rollout")
        state = self.net.initial_state(n, h, w)
        out = []
        x = None
        for t in range(k + n_future - 1):
            inp = _nchw(frames[:, t]) if t < k else x
            pred, state = self.net.step(inp, a[:, t + 1], state)
            x = pred.data
            if t + 1 >= k:
                out.append(_nhwc(x))
        return np.stack(out, axis=1)

    def forecast(self, ctx):
        if not self.ready:
            raise ModelNotReadyError("image forecaster is not trained")
        if self.clm is None:
            raise ModelNotReadyError("image forecaster needs a CLM to read locations off frames")
        check_lengths(self.config, ctx)
        if ctx.frames is None:
            raise ValidationError("image forecaster needs context frames")
        poses = np.concatenate([ctx.poses, ctx.planned])
        acts = step_actions(poses)[None]
        frames_hat = self.rollout_frames(ctx.frames[None], acts, self.config.horizon)[0]
        touch = frames_hat[..., 2].reshape(len(frames_hat), -1).max(axis=1) > 0.05
        s_hat = np.empty(self.config.horizon)
        last = float(ctx.s[-1])
        located = self.clm.predict_batch(frames_hat) if touch.any() else None
        for i in range(self.config.horizon):
            if touch[i]:
                last = float(located[i])
            s_hat[i] = last
        return ForecastResult(np.clip(s_hat, 0.0, 1.0), self.kind, frames_hat)

    def flops(self):
        r = self.resolution
        c1, c2 = self.channels
        hd = self.hidden
        per = 2 * 9 * (r * r * 3 * c1 + (r // 2) ** 2 * c1 * c2
                       + (r // 4) ** 2 * 4 * hd * (c2 + N_ACTION + hd + 2 * hd)
                       + (r // 2) ** 2 * hd * c1 + r * r * c1 * 3)
        clm = self.clm.flops() if self.clm is not None else 0.0
        return float(per * self.config.total + clm * self.config.horizon)

    def save(self, path, config_hash):
        d = {"net." + k: v for k, v in self.net.state_dict().items()}
        d["action_scale"] = self.action_scale
        save_ckpt(path, d, kind="image_tfm", config_hash=config_hash,
                  extra={"context": self.config.context, "horizon": self.config.horizon,
                         "frame_hz": self.config.frame_hz, "resolution": self.resolution,
                         "channels": list(self.channels), "hidden": self.hidden})

    @classmethod
    def load(cls, path, config_hash=None, clm=None):
        tensors, header = load_ckpt(path, kind="image_tfm", config_hash=config_hash)
        e = header["extra"]
        model = cls(PredictorConfig(e["context"], e["horizon"], e["frame_hz"]), e["resolution"],
                    e["channels"], e["hidden"], clm=clm)
        model.net.load_state_dict({k[4:]: v for k, v in tensors.items() if k.startswith("net.")})
        model.action_scale = tensors["action_scale"]
        model.ready = True
        return model


@dataclass
class FrameWindows:
    frames: np.ndarray  # (N, T, H, W, 3) float32
    actions: np.ndarray  # (N, T, 6) step increments
    group: np.ndarray

    def __len__(self):
        return len(self.frames)


def image_windows(rollouts, cfg: PredictorConfig, stride=4, contact_only=True, max_windows=None, rng=None):
    """Frame sequences of length c + H. With ``contact_only`` the current frame must touch."""
    total = cfg.total
    picks = []
    for g, r in enumerate(rollouts):
        n = len(r.frames)
        contact = r.in_contact
        for k in range(cfg.context - 1, n - cfg.horizon, stride):
            if contact_only and not contact[k]:
                continue
            picks.append((g, k - cfg.context + 1))
    if not picks:
        raise ValidationError("no usable frame windows in the dataset")
    if max_windows is not None and len(picks) > max_windows:
        rng = rng if rng is not None else np.random.default_rng(0)
        keep = np.sort(rng.choice(len(picks), size=max_windows, replace=False))
        picks = [picks[i] for i in keep]
    frames = np.empty((len(picks), total) + rollouts[0].frames.shape[1:], dtype=np.float32)
    actions = np.empty((len(picks), total, N_ACTION))
    cache = {}
    for i, (g, s) in enumerate(picks):
        r = rollouts[g]
        if g not in cache:
            cache = {g: (r.frames_float(), step_actions(r.frame_poses))}
        f, a = cache[g]
        frames[i] = f[s:s + total]
        actions[i] = a[s:s + total]
        actions[i, 0] = 0.0
    return FrameWindows(frames, actions, np.array([g for g, _ in picks]))


def sampling_probability(epoch, epochs):
    """Scheduled-sampling ramp: zero for the first third, then linear up to one."""
    start = epochs / 3.0
    if epoch < start or epochs <= 1:
        return 0.0
    return float(min(1.0, (epoch - start + 1) / max(epochs - start, 1.0)))


def horizon_mse(model: ImageTfm, windows: FrameWindows, idx=None, batch=16):
    """Mean pixel MSE over the horizon of free-running forecasts."""
    c, H = model.config.context, model.config.horizon
    idx = np.arange(len(windows)) if idx is None else np.asarray(idx)
    err = []
    for i in range(0, len(idx), batch):
        sel = idx[i:i + batch]
        pred = model.rollout_frames(windows.frames[sel, :c], windows.actions[sel], H)
        err.append(((pred - windows.frames[sel, c:]) ** 2).mean(axis=(1, 2, 3, 4)))
    return float(np.concatenate(err).mean())


def persistence_mse(windows: FrameWindows, cfg: PredictorConfig, idx=None):
    idx = np.arange(len(windows)) if idx is None else np.asarray(idx)
    c = cfg.context
    last = windows.frames[idx, c - 1:c].astype(float)
    return float(((windows.frames[idx, c:] - last) ** 2).mean())


def train_image_tfm(windows: FrameWindows, config: PredictorConfig = PredictorConfig(),
                    hp: ImageTfmHyperparams = ImageTfmHyperparams(), rng=None, clm=None,
                    split: Optional[tuple] = None):
    """Horizon pixel-MSE training with teacher forcing ramping into self-feeding.

    Parameters from the epoch with the best free-running validation error
    are kept, so report generalisation on rollouts outside ``windows``.
    """
    from .state_tfm import split_groups

    rng = rng if rng is not None else np.random.default_rng(0)
    if windows.frames.shape[1] != config.total:
        raise ValidationError(f"frame windows must span {config.total} frames")
    res = windows.frames.shape[2]
    model = ImageTfm(config, res, hp.channels, hp.hidden, rng, clm)
    tr, va = split if split is not None else split_groups(windows.group, hp.validation_fraction, rng)
    scale = windows.actions[tr][:, 1:].reshape(-1, N_ACTION).std(axis=0)
    model.action_scale = np.where(scale > 1e-12, scale, 1.0)
    c, total = config.context, config.total
    net = model.net

    def batch_loss(idx, epoch):
        sel = tr[idx]
        f = windows.frames[sel].astype(float)
        a = windows.actions[sel] / model.action_scale
        p = sampling_probability(epoch, hp.epochs)
        state = net.initial_state(len(sel), res, res)
        terms = []
        x = None
        for t in range(total - 1):
            own = t >= c and rng.random() < p
            inp = x if own else _nchw(f[:, t])
            pred, state = net.step(inp, a[:, t + 1], state)
            x = pred.data
            if t + 1 >= c:
                terms.append(T.mse(pred, _nchw(f[:, t + 1])))
        loss = terms[0]
        for term in terms[1:]:
            loss = T.add(loss, term)
        return T.mul(loss, T.Tensor(1.0 / len(terms)))

    best = {"score": np.inf, "state": None}

    def validate():
        score = horizon_mse(model, windows, va)
        if score < best["score"]:
            best.update(score=score, state={k: v.copy() for k, v in net.state_dict().items()})
        return score

    model.curve = fit(net.parameters(), len(tr), batch_loss, epochs=hp.epochs, batch_size=hp.batch_size,
                      lr=hp.lr, rng=rng, validate=validate if len(va) else None, curve=TrainingCurve(),
                      lr_decay=hp.lr_decay)
    if best["state"] is not None:
        # keep the epoch with the lowest free-running validation error
        net.load_state_dict(best["state"])
        model.best_epoch = int(np.argmin(model.curve.validation))
    model.split = (tr, va)
    model.ready = True
    return model
