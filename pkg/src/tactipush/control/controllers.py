"""Command sources: open loop, PD tactile servo and d-FPC."""
from __future__ import annotations

import time
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.transform import Rotation

from ..errors import ModelNotReadyError, ValidationError
from ..forecast.base import ForecastContext, Predictor, pose_matrix
from ..simworld.rollout import frame_tick
from ..tactile.clm import clm_predict
from ..tactile.render import oracle_decode
from .law import ErrorHorizon, GainSchedule, error_horizon, residual_action
from .trajectory import TrajectorySpec, reference_increment

MEASURE_MODES = ("clm", "oracle_decode", "truth")
# nominal arithmetic throughput used for modelled compute time
MODEL_FLOPS_PER_MS = 1e6


@dataclass
class ControlCommand:
    a_ref: np.ndarray
    a_res: float = 0.0
    contact_axis: np.ndarray = field(default_factory=lambda: np.zeros(3))
    twist: Optional[np.ndarray] = None
    saturated: bool = False
    degraded: bool = False
    s_measured: Optional[float] = None
    s_ref: Optional[float] = None
    comp_time_ms: float = 0.0
    s_hat: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.twist is None:
            self.twist = np.asarray(self.a_ref, dtype=float).copy()

    def to_record(self):
        return {
            "a_ref": [float(x) for x in self.a_ref],
            "a_res": float(self.a_res),
            "contact_axis": [float(x) for x in self.contact_axis],
            "twist": [float(x) for x in self.twist],
            "saturated": bool(self.saturated),
            "degraded": bool(self.degraded),
            "u_measured": None if self.s_measured is None else float(self.s_measured),
            "s_ref": None if self.s_ref is None else float(self.s_ref),
            "comp_time_ms": float(self.comp_time_ms),
            "s_hat": None if self.s_hat is None else [float(x) for x in self.s_hat],
        }


def compose(a_ref, a_res, axis, ee_position, point):
    """Reference twist plus a rotation of ``a_res`` about the line (point, axis)."""
    twist = np.array(a_ref, dtype=float)
    if a_res == 0.0 or axis is None:
        return twist
    w = a_res * np.asarray(axis, dtype=float)
    twist[3:] += w
    twist[:3] += np.cross(w, np.asarray(ee_position) - np.asarray(point))
    return twist


class Sensor:
    """Turns a tactile frame into (in_contact, s).

    ``clm`` and ``oracle_decode`` modes detect contact from the heatmap
    channel; ``truth`` reads the simulator directly.
    """

    def __init__(self, mode="clm", clm=None, layout=None, threshold=0.05):
        if mode not in MEASURE_MODES:
            raise ValidationError(f"measurement mode must be one of {MEASURE_MODES}")
        if mode == "clm" and clm is None:
            raise ModelNotReadyError("clm measurement mode needs a trained CLM")
        self.mode = mode
        self.clm = clm
        self.layout = layout
        self.threshold = threshold

    def flops(self):
        return self.clm.flops() if self.mode == "clm" else 0.0

    def measure(self, obs) -> Optional[float]:
        if self.mode == "truth":
            return obs.state.u_att
        px = obs.frame.pixels
        if px[..., 2].max() <= self.threshold:
            return None
        if self.mode == "clm":
            return clm_predict(self.clm, obs.frame)
        from ..tactile.render import MarkerLayout
        layout = self.layout or MarkerLayout(resolution=px.shape[0])
        return oracle_decode(obs.frame, layout)


class Controller:
    name = "base"

    def __init__(self, spec: TrajectorySpec, sensor: Optional[Sensor] = None, limit=0.5, timing="model"):
        if timing not in ("model", "wall"):
            raise ValidationError("timing must be 'model' or 'wall'")
        self.spec = spec
        self.sensor = sensor or Sensor("truth")
        self.limit = float(limit)
        self.timing = timing

    def reset(self, world, state, period):
        self.period = period
        self.dt = world.physics_dt
        self.s_ref = None
        self.axis = None
        self.point = None

    def reference(self, obs):
        T = self.spec.duration
        if obs.t >= T:
            return np.zeros(6)
        t1 = min(obs.t_next, T)
        a = reference_increment(self.spec, obs.t, t1)
        return a * (t1 - obs.t) / (obs.t_next - obs.t)

    def _track_contact(self, obs, s):
        if s is not None and obs.contact_axis is not None:
            self.axis = obs.contact_axis
            self.point = obs.contact_point

    def model_flops(self):
        return self.sensor.flops()

    def __call__(self, obs):
        start = time.perf_counter()
        cmd = self.tick(obs)
        if self.timing == "wall":
            cmd.comp_time_ms = 1e3 * (time.perf_counter() - start)
        else:
            cmd.comp_time_ms = self.model_flops() / MODEL_FLOPS_PER_MS
        return cmd

    def _finish(self, obs, a_ref, res, s, degraded=False, s_hat=None):
        if res is None or self.axis is None:
            return ControlCommand(a_ref, 0.0, np.zeros(3), None, False, degraded, s, self.s_ref, s_hat=s_hat)
        twist = compose(a_ref, res.value, self.axis, obs.ee_pose.position, self.point)
        return ControlCommand(a_ref, res.value, np.array(self.axis), twist, res.saturated, degraded, s,
                              self.s_ref, s_hat=s_hat)


class OpenLoop(Controller):
    name = "openloop"

    def tick(self, obs):
        s = self.sensor.measure(obs)
        if s is not None and self.s_ref is None:
            self.s_ref = s
        return ControlCommand(self.reference(obs), s_measured=s, s_ref=self.s_ref)


@dataclass(frozen=True)
class _Scalar:
    value: float
    saturated: bool


def pd_tick(s_t, s_ref, e_prev, kp, kd, tick, limit):
    """PD on the frozen reference: e = s_t - s_ref, a_res = -(kp e + kd e_dot)."""
    e = s_t - s_ref
    e_dot = 0.0 if e_prev is None else (e - e_prev) / tick
    raw = -(kp * e + kd * e_dot)
    return _Scalar(float(np.clip(raw, -limit, limit)), abs(raw) > limit), e


class PD(Controller):
    name = "pd"

    def __init__(self, spec, sensor=None, kp=4.0, kd=0.2, limit=0.5, timing="model"):
        super().__init__(spec, sensor, limit, timing)
        self.kp = kp
        self.kd = kd

    def reset(self, world, state, period):
        super().reset(world, state, period)
        self.e_prev = None

    def tick(self, obs):
        a_ref = self.reference(obs)
        s = self.sensor.measure(obs)
        if s is None:
            self.e_prev = None
            return self._finish(obs, a_ref, None, None, degraded=self.s_ref is not None)
        self._track_contact(obs, s)
        if self.s_ref is None:
            self.s_ref = s
        res, self.e_prev = pd_tick(s, self.s_ref, self.e_prev, self.kp, self.kd, self.period, self.limit)
        return self._finish(obs, a_ref, res, s)


class ContextBuffers:
    """Last ``c`` measurements, EE poses and frames.

    Measurements taken before first contact are unknown; once contact is
    made they are back-filled with the first contact measurement.
    """

    def __init__(self, c):
        self.c = c
        self.s = deque(maxlen=c)
        self.poses = deque(maxlen=c)
        self.frames = deque(maxlen=c)

    def push(self, s, pose, frame=None):
        if s is not None and any(x is None for x in self.s):
            self.s = deque([s if x is None else x for x in self.s], maxlen=self.c)
        self.s.append(s)
        self.poses.append(pose)
        self.frames.append(frame)

    def full(self):
        return len(self.s) == self.c and all(x is not None for x in self.s)

    def __len__(self):
        return len(self.s)


def dfpc_tick(buffers: ContextBuffers, s_t, predictor: Predictor, gains: GainSchedule, planned,
              prev: Optional[ErrorHorizon], tick, limit, **oracle_inputs):
    """One d-FPC evaluation: forecast, horizon error, residual."""
    if not buffers.full():
        raise ValidationError(f"d-FPC needs {buffers.c} buffered measurements, have {len(buffers)}")
    frames = None
    if all(f is not None for f in buffers.frames):
        frames = np.stack(buffers.frames)
    ctx = ForecastContext(np.array(buffers.s, dtype=float), np.stack(buffers.poses), planned, frames,
                          **oracle_inputs)
    fc = predictor.forecast(ctx)
    err = error_horizon(fc, s_t, prev, tick)
    return residual_action(err, gains, limit), err, fc


class DFPC(Controller):
    name = "dfpc"

    def __init__(self, spec, predictor: Predictor, gains: GainSchedule, sensor=None, limit=0.5,
                 timing="model", keep_frames=None):
        super().__init__(spec, sensor, limit, timing)
        if len(gains) != predictor.config.horizon:
            raise ValidationError("gain schedule length must equal the forecast horizon")
        self.predictor = predictor
        self.gains = gains
        self.keep_frames = predictor.kind == "image" if keep_frames is None else keep_frames

    def reset(self, world, state, period):
        super().reset(world, state, period)
        self.buffers = ContextBuffers(self.predictor.config.context)
        self.prev = None
        self.world = world
        self.warned = False

    def model_flops(self):
        return self.sensor.flops() + self.predictor.flops()

    def _plan(self, obs):
        """Poses and execution twists for the next ``H`` frames.

        The reference twists are integrated from the current end-effector
        pose, the way the simulator would execute them, so residual rotations
        already applied carry over instead of snapping back to the reference.
        """
        H = self.predictor.config.horizon
        hz = 1.0 / self.period
        dt = self.dt
        k0 = obs.k
        ticks = np.array([frame_tick(k0 + i, hz, dt) for i in range(H + 1)])
        times = ticks * dt
        T = self.spec.duration
        p = np.array(obs.ee_pose.position, dtype=float)
        R = np.array(obs.ee_pose.rotation, dtype=float)
        poses, twists = [], []
        for a, b in zip(times[:-1], times[1:]):
            if a >= T:
                tw = np.zeros(6)
            else:
                b_c = min(b, T)
                tw = reference_increment(self.spec, a, b_c) * (b_c - a) / (b - a)
            p = p + tw[:3] * (b - a)
            R = Rotation.from_rotvec(tw[3:] * (b - a)).as_matrix() @ R
            poses.append(pose_matrix(p, R))
            twists.append(tw)
        return np.stack(poses), np.stack(twists), ticks

    def tick(self, obs):
        a_ref = self.reference(obs)
        s = self.sensor.measure(obs)
        pose = pose_matrix(obs.ee_pose.position, obs.ee_pose.rotation)
        self.buffers.push(s, pose, obs.frame.pixels if self.keep_frames else None)
        if s is None:
            self.prev = None
            return self._finish(obs, a_ref, None, None, degraded=self.s_ref is not None)
        self._track_contact(obs, s)
        if self.s_ref is None:
            self.s_ref = s
        if not self.buffers.full():
            return self._finish(obs, a_ref, None, s, degraded=True)
        planned, twists, ticks = self._plan(obs)
        try:
            res, self.prev, fc = dfpc_tick(self.buffers, s, self.predictor, self.gains, planned, self.prev,
                                           self.period, self.limit, planned_twists=twists,
                                           planned_ticks=ticks, state=obs.state, world=obs.world, dt=self.dt)
        except ModelNotReadyError as exc:
            if not self.warned:
                warnings.warn(f"d-FPC running on the reference only: {exc}", RuntimeWarning, stacklevel=2)
                self.warned = True
            return self._finish(obs, a_ref, None, s, degraded=True)
        return self._finish(obs, a_ref, res, s, s_hat=fc.s_hat)
