"""Reference trajectories: bang-bang / trapezoidal lines and circular arcs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from ..core import EULER_SEQ, Pose
from ..errors import ValidationError

LINEAR = "linear_bang_bang"
ARC = "arc"
KINDS = (LINEAR, ARC)


@dataclass(frozen=True)
class SpeedProfile:
    """Time-optimal rest-to-rest profile along a path of given length."""

    length: float
    v_max: float
    a_max: float

    @property
    def triangular(self):
        return self.length < self.v_max ** 2 / self.a_max

    @property
    def accel_time(self):
        if self.triangular:
            return math.sqrt(self.length / self.a_max)
        return self.v_max / self.a_max

    @property
    def peak_speed(self):
        return self.a_max * self.accel_time

    @property
    def duration(self):
        ta = self.accel_time
        if self.triangular:
            return 2.0 * ta
        return 2.0 * ta + (self.length - self.v_max * ta) / self.v_max

    def __call__(self, t):
        """Arc length and speed at time ``t`` (clamped to the profile)."""
        T = self.duration
        ta = self.accel_time
        vp = self.peak_speed
        a = self.a_max
        t = min(max(t, 0.0), T)
        if t <= ta:
            return 0.5 * a * t * t, a * t
        if t >= T - ta:
            r = T - t
            return self.length - 0.5 * a * r * r, a * r
        return 0.5 * a * ta * ta + vp * (t - ta), vp


@dataclass(frozen=True)
class TrajectorySpec:
    """Start and final EE pose plus the kinematic limits.

    Arcs need a ``center`` equidistant from ``p0`` and ``pf`` and must end
    above their start. Both kinds follow the same rest-to-rest speed profile
    along the path, and orientation is slerped on the normalized arc length.
    """

    kind: str
    p0: tuple
    q0: tuple
    pf: tuple
    qf: tuple
    v_max: float
    a_max: float
    center: Optional[tuple] = None
    _geom: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("p0", "q0", "pf", "qf"):
            v = np.asarray(getattr(self, name), dtype=float)
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValidationError(f"{name} must be a finite 3-vector")
            object.__setattr__(self, name, tuple(float(x) for x in v))
        if self.kind not in KINDS:
            raise ValidationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if not (self.v_max > 0 and self.a_max > 0):
            raise ValidationError("v_max and a_max must be positive")
        p0, pf = np.array(self.p0), np.array(self.pf)
        geom = {}
        if self.kind == LINEAR:
            geom["length"] = float(np.linalg.norm(pf - p0))
        else:
            if self.center is None:
                raise ValidationError("arc trajectories need a center")
            c = np.asarray(self.center, dtype=float)
            object.__setattr__(self, "center", tuple(float(x) for x in c))
            if not pf[2] > p0[2]:
                raise ValidationError("arc must finish above its start (pf.z > p0.z)")
            r0 = p0 - c
            rf = pf - c
            R = float(np.linalg.norm(r0))
            if R <= 0 or abs(np.linalg.norm(rf) - R) > 1e-9 * max(R, 1.0):
                raise ValidationError("arc center must be equidistant from p0 and pf")
            e_r = r0 / R
            perp = rf - (rf @ e_r) * e_r
            if np.linalg.norm(perp) < 1e-12 * R:
                raise ValidationError("arc endpoints are collinear with the center; plane undefined")
            e_t = perp / np.linalg.norm(perp)
            sweep = math.atan2(rf @ e_t, rf @ e_r)
            geom.update(radius=R, e_r=e_r, e_t=e_t, sweep=sweep, length=R * sweep)
        R0 = Rotation.from_euler(EULER_SEQ, self.q0)
        Rf = Rotation.from_euler(EULER_SEQ, self.qf)
        geom["R0"] = R0
        geom["w"] = (Rf * R0.inv()).as_rotvec()
        geom["profile"] = SpeedProfile(geom["length"], self.v_max, self.a_max)
        object.__setattr__(self, "_geom", geom)

    @property
    def length(self):
        return self._geom["length"]

    @property
    def duration(self):
        return self._geom["profile"].duration if self.length > 0 else 0.0

    @property
    def profile(self):
        return self._geom["profile"]

    def _progress(self, t):
        if self.length == 0:
            return 0.0, 0.0, 0.0, 0.0
        s, sd = self.profile(t)
        return s, sd, s / self.length, sd / self.length

    def position(self, t):
        s, _, lam, _ = self._progress(t)
        if self.kind == LINEAR:
            return np.array(self.p0) + lam * (np.array(self.pf) - np.array(self.p0))
        g = self._geom
        a = s / g["radius"]
        return np.array(self.center) + g["radius"] * (math.cos(a) * g["e_r"] + math.sin(a) * g["e_t"])

    def rotation(self, t):
        _, _, lam, _ = self._progress(t)
        return (Rotation.from_rotvec(lam * self._geom["w"]) * self._geom["R0"]).as_matrix()

    def pose(self, t):
        return Pose.from_matrix(self.position(t), self.rotation(t))

    def to_dict(self):
        d = {"kind": self.kind, "p0": list(self.p0), "q0": list(self.q0), "pf": list(self.pf),
             "qf": list(self.qf), "v_max": self.v_max, "a_max": self.a_max}
        if self.center is not None:
            d["center"] = list(self.center)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class ReferenceTwist(NamedTuple):
    twist: np.ndarray
    ended: bool


def reference_twist(spec: TrajectorySpec, t: float) -> ReferenceTwist:
    """Instantaneous world-frame twist (v, omega) of the reference at ``t``."""
    if t < 0 or t > spec.duration or spec.length == 0:
        return ReferenceTwist(np.zeros(6), True)
    _, sd, _, lam_dot = spec._progress(t)
    g = spec._geom
    if spec.kind == LINEAR:
        v = sd * (np.array(spec.pf) - np.array(spec.p0)) / spec.length
    else:
        a = spec._progress(t)[0] / g["radius"]
        v = sd * (-math.sin(a) * g["e_r"] + math.cos(a) * g["e_t"])
    return ReferenceTwist(np.concatenate([v, lam_dot * g["w"]]), False)


def reference_increment(spec: TrajectorySpec, t0: float, t1: float) -> np.ndarray:
    """Constant twist carrying the reference pose from ``t0`` to ``t1`` exactly.

    Used for zero-order-hold execution at the control rate: translation is the
    secant velocity and rotation the mean angular velocity between samples.
    """
    dt = t1 - t0
    if dt <= 0:
        raise ValidationError("increment needs t1 > t0")
    p0, p1 = spec.position(t0), spec.position(t1)
    R0, R1 = spec.rotation(t0), spec.rotation(t1)
    w = Rotation.from_matrix(R1 @ R0.T).as_rotvec()
    return np.concatenate([(p1 - p0) / dt, w / dt])
