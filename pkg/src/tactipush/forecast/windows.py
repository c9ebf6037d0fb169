"""Sliding context/horizon windows cut from stored push rollouts."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..tactile.clm import ClmModel, to_nchw
from .base import PredictorConfig

CONTACT_THRESHOLD = 0.05


def measure_frames(frames, clm: Optional[ClmModel], u_true=None, threshold=CONTACT_THRESHOLD):
    """Per-frame measured location (NaN without contact).

    With a CLM, contact is detected from the heatmap channel and located by
    the model; without one, the ground truth is used.
    """
    if clm is None:
        return np.array(u_true, dtype=float)
    frames = np.asarray(frames, dtype=float)
    touch = frames[..., 2].reshape(len(frames), -1).max(axis=1) > threshold
    out = np.full(len(frames), np.nan)
    if touch.any():
        out[touch] = clm.predict_batch(frames[touch])
    return out


def backfill(s):
    """Fill pre-contact NaNs with the first contact value, later gaps with the last one."""
    s = np.array(s, dtype=float)
    idx = np.flatnonzero(~np.isnan(s))
    if len(idx) == 0:
        return s
    s[: idx[0]] = s[idx[0]]
    for i in range(idx[0] + 1, len(s)):
        if np.isnan(s[i]):
            s[i] = s[i - 1]
    return s


@dataclass
class WindowSet:
    s_ctx: np.ndarray  # (N, c)
    poses_ctx: np.ndarray  # (N, c, 4, 4)
    planned: np.ndarray  # (N, H, 4, 4)
    target: np.ndarray  # (N, H)
    group: np.ndarray  # (N,) rollout index
    frames_ctx: Optional[np.ndarray] = None
    frames_target: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.target)

    def subset(self, idx):
        pick = lambda a: None if a is None else a[idx]
        return WindowSet(self.s_ctx[idx], self.poses_ctx[idx], self.planned[idx], self.target[idx],
                         self.group[idx], pick(self.frames_ctx), pick(self.frames_target))


def rollout_windows(s, poses, cfg: PredictorConfig, group=0, frames=None, stride=1):
    """Windows whose current frame and whole horizon are in contact."""
    c, H = cfg.context, cfg.horizon
    s = np.asarray(s, dtype=float)
    contact = ~np.isnan(s)
    sb = backfill(s)
    n = len(s)
    rows = []
    for k in range(0, n - H, stride):
        if not contact[k] or not contact[k + 1:k + H + 1].all():
            continue
        idx = np.clip(np.arange(k - c + 1, k + 1), 0, None)
        rows.append((idx, np.arange(k + 1, k + H + 1)))
    if not rows:
        return None
    ci = np.stack([r[0] for r in rows])
    hi = np.stack([r[1] for r in rows])
    ws = WindowSet(sb[ci], poses[ci], poses[hi], sb[hi], np.full(len(rows), group))
    if frames is not None:
        ws.frames_ctx = frames[ci]
        ws.frames_target = frames[hi]
    return ws


def concat_windows(sets):
    sets = [w for w in sets if w is not None]
    if not sets:
        raise ValueError("no usable windows")
    cat = lambda name: None if getattr(sets[0], name) is None else np.concatenate([getattr(w, name) for w in sets])
    return WindowSet(cat("s_ctx"), cat("poses_ctx"), cat("planned"), cat("target"), cat("group"),
                     cat("frames_ctx"), cat("frames_target"))


def dataset_windows(rollouts, cfg: PredictorConfig, clm=None, with_frames=False, stride=1):
    sets = []
    for i, r in enumerate(rollouts):
        frames = r.frames_float()
        s = measure_frames(frames, clm, r.u_true)
        sets.append(rollout_windows(s, r.frame_poses, cfg, i, frames if with_frames else None, stride))
    return concat_windows(sets)
