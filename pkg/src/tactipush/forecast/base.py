"""Predictor interface, forecast containers and the two reference backends."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from ..core import EULER_SEQ
from ..errors import ModelNotReadyError, ValidationError


@dataclass(frozen=True)
class PredictorConfig:
    context: int = 10
    horizon: int = 10
    frame_hz: float = 60.0

    def __post_init__(self):
        if self.context < 2:
            raise ValidationError("context length must be at least 2")
        if self.horizon < 1:
            raise ValidationError("horizon must be at least one frame (T > c)")

    @property
    def total(self):
        return self.context + self.horizon


@dataclass(frozen=True)
class ForecastResult:
    s_hat: np.ndarray
    backend: str
    frames_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        s = np.asarray(self.s_hat, dtype=float)
        if np.any(s < 0) or np.any(s > 1):
            raise ValidationError("forecast locations must lie in [0, 1]")
        object.__setattr__(self, "s_hat", s)

    def __len__(self):
        return len(self.s_hat)


@dataclass
class ForecastContext:
    """Everything a backend may condition on at one control tick.

    ``poses`` and ``planned`` are (n, 4, 4) homogeneous EE poses for the
    context frames and the planned horizon frames. ``planned_twists`` and
    ``planned_ticks`` describe how the reference would be executed, which the
    physics oracle replays exactly.
    """

    s: np.ndarray
    poses: np.ndarray
    planned: np.ndarray
    frames: Optional[np.ndarray] = None
    planned_twists: Optional[np.ndarray] = None
    planned_ticks: Optional[np.ndarray] = None
    state: object = None
    world: object = None
    dt: float = 1e-3


def pose_matrix(position, rotation):
    T = np.eye(4)
    T[:3, :3] = rotation
    T[:3, 3] = position
    return T


def relative_actions(poses, reference):
    """Encode poses in the frame of ``reference`` as (dx, dy, dz, rx, ry, rz)."""
    inv = np.linalg.inv(reference)
    rel = inv[None] @ np.asarray(poses)
    rv = Rotation.from_matrix(rel[:, :3, :3]).as_rotvec()
    return np.concatenate([rel[:, :3, 3], rv], axis=1)


def check_lengths(cfg: PredictorConfig, ctx: ForecastContext):
    if len(ctx.s) != cfg.context or len(ctx.poses) != cfg.context:
        raise ValidationError(f"context must hold {cfg.context} samples, got {len(ctx.s)} s / {len(ctx.poses)} poses")
    if len(ctx.planned) != cfg.horizon:
        raise ValidationError(f"planned actions must cover {cfg.horizon} frames, got {len(ctx.planned)}")
    if ctx.frames is not None and len(ctx.frames) != cfg.context:
        raise ValidationError(f"context frames must number {cfg.context}, got {len(ctx.frames)}")


class Predictor:
    kind = "base"
    ready = True

    def __init__(self, config: PredictorConfig = PredictorConfig()):
        self.config = config

    def flops(self):
        return 0.0

    def forecast(self, ctx: ForecastContext) -> ForecastResult:
        raise NotImplementedError


class Persistence(Predictor):
    """Every horizon step repeats the last measured location."""

    kind = "persistence"

    def forecast(self, ctx):
        check_lengths(self.config, ctx)
        return ForecastResult(np.full(self.config.horizon, float(ctx.s[-1])), self.kind)


class PhysicsOracle(Predictor):
    """Replays the planned twists on a copy of the true simulator state."""

    kind = "oracle"

    def forecast(self, ctx):
        from ..simworld import kernels as K
        from ..simworld.state import advance

        check_lengths(self.config, ctx)
        if ctx.state is None or ctx.world is None or ctx.planned_twists is None:
            raise ModelNotReadyError("physics oracle needs the true state, world and planned twists")
        st = ctx.state.copy()
        out = np.empty(self.config.horizon)
        last = float(ctx.s[-1])
        sp = ctx.world.stem_params()
        fp = ctx.world.finger_params()
        for i, (tw, n) in enumerate(zip(ctx.planned_twists, np.diff(ctx.planned_ticks))):
            if n > 0:
                advance(st, ctx.world, tw, ctx.dt, int(n), sp, fp)
            u = st.u_att
            last = last if u is None else u
            out[i] = last
        return ForecastResult(np.clip(out, 0.0, 1.0), self.kind)

    def flops(self):
        # ~60 flops per stem per physics tick, 17 ticks per frame
        return 60.0 * 17 * self.config.horizon


def predict(backend: Predictor, context_frames, context_actions, planned_actions, clm=None, *,
            context_s=None, **extra) -> ForecastResult:
    """Functional entry point over raw arrays.

    ``context_actions`` and ``planned_actions`` are (n, 4, 4) poses. When
    ``context_s`` is absent it is measured from ``context_frames`` with ``clm``.
    """
    if not getattr(backend, "ready", True):
        raise ModelNotReadyError(f"{backend.kind} backend is not trained")
    if context_s is None:
        if clm is None:
            raise ValidationError("either context_s or a CLM is required")
        from ..tactile.clm import clm_predict
        context_s = [clm_predict(clm, f) for f in context_frames]
    frames = None if context_frames is None else np.stack(
        [getattr(f, "pixels", f) for f in context_frames])
    ctx = ForecastContext(np.asarray(context_s, dtype=float), np.asarray(context_actions),
                          np.asarray(planned_actions), frames, **extra)
    res = backend.forecast(ctx)
    if len(res.s_hat) != backend.config.horizon:
        raise ValidationError("backend violated the horizon-length contract")
    return res
