"""Closed-loop simulation: 1 kHz physics, frame-rate sensing and control."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import Pose, TactileFrame, matrix_to_rotvec
from ..errors import NonFiniteCommandError, ValidationError
from ..logs import RolloutLog
from ..tactile.render import MarkerLayout, render
from . import kernels as K
from .models import World
from .state import WorldState, advance, decode_events


def frame_tick(k, frame_hz, dt):
    """Physics tick at which frame ``k`` is captured (first tick at or after k/frame_hz)."""
    return int(math.ceil(k / frame_hz / dt - 1e-9))


def frame_ticks(n_ticks, frame_hz, dt):
    out = []
    k = 0
    while True:
        n = frame_tick(k, frame_hz, dt)
        if n >= n_ticks:
            return np.array(out, dtype=np.int64)
        out.append(n)
        k += 1


@dataclass(frozen=True)
class Observation:
    """What a command source sees at one control tick.

    ``state`` is the full simulator state; sensor-faithful controllers only
    read ``frame`` and the robot-side fields, while oracle variants may use it.
    """

    k: int
    t: float
    t_next: float
    period: float
    frame: TactileFrame
    ee_pose: Pose
    contact_point: Optional[np.ndarray]
    contact_axis: Optional[np.ndarray]
    state: WorldState
    world: World


class ZeroCommand:
    """Holds the end effector still."""

    name = "zero"

    def reset(self, world, state, period):
        pass

    def __call__(self, obs):
        return np.zeros(6)


def _command_parts(cmd):
    if isinstance(cmd, np.ndarray) or isinstance(cmd, (list, tuple)):
        twist = np.asarray(cmd, dtype=float).reshape(-1)
        return twist, {"twist": twist.tolist()}
    return np.asarray(cmd.twist, dtype=float), cmd.to_record()


def rollout(initial: WorldState, controller, duration: float, physics_dt: Optional[float] = None,
            frame_hz: float = 60.0, world: World = World(), rng=None, *, layout: MarkerLayout = MarkerLayout(),
            noise_std: float = 0.0, keep_frames: bool = False, meta=None) -> RolloutLog:
    """Run ``controller`` against the simulator for ``duration`` seconds.

    Frames are captured at the first physics tick at or after each frame
    period boundary, so the frame period need not be a multiple of the
    physics step. The controller's twist is held until the next frame.
    """
    dt = world.physics_dt if physics_dt is None else float(physics_dt)
    if not (0 < dt <= 2e-3):
        raise ValidationError(f"physics_dt must lie in (0, 2 ms], got {dt}")
    if frame_hz <= 0 or duration <= 0:
        raise ValidationError("frame_hz and duration must be positive")
    n_ticks = int(round(duration / dt))
    fticks = frame_ticks(n_ticks, frame_hz, dt)
    period = 1.0 / frame_hz
    state = initial.copy()
    sp = world.stem_params()
    fp = world.finger_params()
    ticks = np.zeros((n_ticks, K.R_SIZE))
    events = np.zeros((n_ticks, len(world.stems)), dtype=np.int64)
    noise = rng.spawn("frame-noise") if (rng is not None and noise_std > 0) else None
    if hasattr(controller, "reset"):
        controller.reset(world, state.copy(), period)
    records = []
    frames = [] if keep_frames else None
    finger = world.finger
    last_events = []
    for k, n0 in enumerate(fticks):
        n1 = fticks[k + 1] if k + 1 < len(fticks) else n_ticks
        t = float(n0 * dt)
        frame = render(state.contacts, layout, noise, noise_std=noise_std, finger=finger, timestamp=t)
        if keep_frames:
            frames.append(frame.pixels.astype(np.float32))
        point, axis = state.contact_frame(world)
        obs = Observation(k, t, n1 * dt, period, frame, state.ee_pose, point, axis, state.copy(), world)
        cmd = controller(obs)
        twist, rec = _command_parts(cmd)
        contact = state.contact
        rec.update(k=k, tick=int(n0), t=t, ee_position=[float(x) for x in state.ee[K.EE_POS:K.EE_POS + 3]],
                   ee_rotvec=[float(x) for x in matrix_to_rotvec(state.ee_rotation)], in_contact=contact.in_contact, u_true=contact.u,
                   penetration=contact.penetration, normal_force=contact.normal_force,
                   tangential_force=contact.tangential_force, sticking=contact.sticking,
                   events=last_events)
        records.append(rec)
        if twist.shape != (6,) or not np.all(np.isfinite(twist)):
            log = RolloutLog(dt, frame_hz, ticks[:n0], events[:n0], fticks[:k + 1], records,
                             None if frames is None else np.stack(frames), dict(meta or {}, aborted_at=k))
            err = NonFiniteCommandError(k)
            err.log = log
            raise err
        rec_view = ticks[n0:n1]
        ev_view = events[n0:n1]
        sub_r = np.empty((n1 - n0, K.R_SIZE))
        sub_e = np.zeros((n1 - n0, events.shape[1]), dtype=np.int64)
        status = K.advance(state.ee, state.stems, sp, fp, twist, dt, int(n1 - n0), sub_r, sub_e)
        if status != 0:
            from .state import raise_on_status
            raise_on_status(status, int(n0))
        rec_view[:] = sub_r
        ev_view[:] = sub_e
        last_events = [name for row in sub_e[:, 0] if row for name in decode_events(row)]
    return RolloutLog(dt, frame_hz, ticks, events, fticks, records,
                      None if frames is None else np.stack(frames), dict(meta or {}))
