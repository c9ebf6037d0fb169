"""Domain types, stream synchronization and seeded randomness."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import UnsynchronizableError, ValidationError

# Extrinsic XYZ everywhere (scipy lowercase).
EULER_SEQ = "xyz"


def wrap_angle(a):
    """Map angles into (-pi, pi]."""
    a = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(a <= -np.pi, a + 2 * np.pi, a)


def euler_to_matrix(euler):
    return Rotation.from_euler(EULER_SEQ, np.asarray(euler, dtype=float)).as_matrix()


def matrix_to_euler(R):
    return wrap_angle(Rotation.from_matrix(np.asarray(R, dtype=float)).as_euler(EULER_SEQ))


def rotvec_to_matrix(rv):
    return Rotation.from_rotvec(np.asarray(rv, dtype=float)).as_matrix()


def matrix_to_rotvec(R):
    return Rotation.from_matrix(np.asarray(R, dtype=float)).as_rotvec()


def _frozen_vec(x, n, name):
    a = np.array(x, dtype=float).reshape(-1)
    if a.shape != (n,):
        raise ValidationError(f"{name} must have {n} components, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """End-effector pose in the robot base frame (meters, extrinsic XYZ radians)."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        p = _frozen_vec(self.position, 3, "position")
        if not np.all(np.isfinite(p)):
            raise ValidationError("position must be finite")
        o = np.array(wrap_angle(_frozen_vec(self.orientation, 3, "orientation")))
        o.setflags(write=False)
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", o)

    @classmethod
    def from_matrix(cls, position, R):
        return cls(position, matrix_to_euler(R))

    @property
    def rotation(self):
        return euler_to_matrix(self.orientation)

    def as_vector(self):
        return np.concatenate([self.position, self.orientation])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=float)
        return cls(v[:3], v[3:6])


@dataclass(frozen=True)
class Action:
    pose: Pose
    timestamp: float

    def as_vector(self):
        return self.pose.as_vector()


@dataclass(frozen=True)
class TactileFrame:
    pixels: np.ndarray
    timestamp: float = 0.0

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3 or px.shape[0] != px.shape[1]:
            raise ValidationError(f"tactile frame must be HxHx3, got {px.shape}")
        if px.shape[0] not in (32, 64):
            raise ValidationError(f"tactile resolution must be 32 or 64, got {px.shape[0]}")
        if px.size and (px.min() < 0.0 or px.max() > 1.0):
            raise ValidationError("tactile pixels must lie in [0, 1]")

    @property
    def resolution(self):
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ContactState:
    """Ground-truth contact between one stem and the finger.

    ``u`` is the attachment coordinate along the finger axis, 0 at the
    camera/base and 1 at the tip; it is ``None`` when not in contact.
    """

    in_contact: bool = False
    u: Optional[float] = None
    penetration: float = 0.0
    normal_force: float = 0.0
    tangential_force: float = 0.0
    sticking: bool = False

    def __post_init__(self):
        if not self.in_contact:
            if self.penetration != 0.0 or self.normal_force != 0.0 or self.tangential_force != 0.0:
                raise ValidationError("out-of-contact state must carry zero penetration and forces")
        else:
            if self.u is None or not (0.0 <= self.u <= 1.0):
                raise ValidationError(f"contact coordinate must lie in [0, 1], got {self.u}")
        if self.penetration < 0.0 or self.normal_force < 0.0:
            raise ValidationError("penetration and normal force must be non-negative")


NO_CONTACT = ContactState()


@dataclass(frozen=True)
class SyncedSample:
    frame: TactileFrame
    action: Action
    skew: float


@dataclass
class SyncResult:
    samples: list
    dropped: int

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def __getitem__(self, i):
        return self.samples[i]


def _name_key(part):
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    digest = hashlib.sha256(str(part).encode()).digest()
    return int.from_bytes(digest[:4], "little")


class Rng:
    """Seeded Philox stream; ``spawn`` derives independent named sub-streams.

    Children depend only on (seed, path), never on how much the parent has
    been consumed, so subsystems can be added without perturbing others.
    """

    def __init__(self, seed: int, path: Sequence = ()):
        self.seed = int(seed) % (1 << 64)
        self.path = tuple(path)
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(_name_key(p) for p in self.path))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, *names) -> "Rng":
        return Rng(self.seed, self.path + tuple(names))

    def __getattr__(self, name):
        return getattr(self.generator, name)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"


def _times(items):
    return np.array([float(x.timestamp) for x in items], dtype=float)


def _nearest(ta, t):
    """Index of the sorted time closest to ``t``; ties go to the earliest."""
    j = int(np.searchsorted(ta, t))
    if j == len(ta) or (j > 0 and abs(t - ta[j - 1]) <= abs(ta[j] - t)):
        j -= 1
    d = abs(t - ta[j])
    while j > 0 and abs(t - ta[j - 1]) == d:
        j -= 1
    return j


def synchronize(frames, actions, tolerance: float = 0.01) -> SyncResult:
    """Pair every frame with the action of nearest timestamp.

    Frames whose nearest action is further than ``tolerance`` away are dropped;
    ties resolve to the earlier action.
    """
    if len(actions) == 0:
        raise UnsynchronizableError("action stream is empty")
    frames = sorted(frames, key=lambda f: f.timestamp)
    actions = sorted(actions, key=lambda a: a.timestamp)
    ta = _times(actions)
    samples = []
    dropped = 0
    for fr in frames:
        tf = float(fr.timestamp)
        j = _nearest(ta, tf)
        skew = abs(tf - ta[j])
        if skew > tolerance:
            dropped += 1
            continue
        samples.append(SyncedSample(fr, actions[j], skew))
    return SyncResult(samples, dropped)


def resample_actions(actions, rate_hz: float):
    """Downsample an action stream to a uniform grid, nearest-sample policy."""
    if rate_hz <= 0:
        raise ValidationError("rate_hz must be positive")
    if len(actions) == 0:
        return []
    ta = _times(actions)
    if np.any(np.diff(ta) <= 0):
        raise ValidationError("action timestamps must be strictly increasing")
    if len(ta) > 1:
        src_rate = (len(ta) - 1) / (ta[-1] - ta[0])
        if rate_hz > src_rate * (1 + 1e-9):
            raise ValidationError(f"rate {rate_hz} Hz exceeds source rate {src_rate:.3f} Hz")
    duration = ta[-1] - ta[0]
    n = int(math.floor(duration * rate_hz + 1e-9)) + 1
    grid = ta[0] + np.arange(n) / rate_hz
    out = []
    for tg in grid:
        j = _nearest(ta, tg)
        out.append(Action(actions[j].pose, float(tg)))
    return out
