"""Pushing scenarios: zones, finger placement, trajectories and clusters."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from ..control.trajectory import ARC, LINEAR, TrajectorySpec
from ..core import Pose, Rng
from ..errors import ValidationError
from ..simworld.models import StemModel, World
from ..simworld.state import WorldState


class Zone(str, Enum):
    """Initial-contact zones on the finger axis."""

    Zone1 = "Zone1"
    Zone2 = "Zone2"
    Zone3 = "Zone3"

    @property
    def bounds(self):
        return _ZONE_BOUNDS[self]

    def contains(self, u):
        lo, hi, lo_closed, hi_closed = self.bounds
        above = u >= lo if lo_closed else u > lo
        below = u <= hi if hi_closed else u < hi
        return bool(above and below)


# (low, high, low closed, high closed)
_ZONE_BOUNDS = {
    Zone.Zone1: (0.55, 0.90, False, True),
    Zone.Zone2: (0.10, 0.45, True, False),
    Zone.Zone3: (0.45, 0.55, True, True),
}


@dataclass(frozen=True)
class ScenarioConfig:
    yaw_deg: float = -35.0
    yaw_jitter_deg: float = 2.0
    zone_margin: float = 0.05  # keep sampled contacts this far inside zone edges (Zone3: 0.02)
    approach_gap: float = 0.01  # m between finger surface and stem at start
    finger_height: float = 0.15
    push_distance: float = 0.10
    v_max: float = 0.06
    a_max: float = 0.5
    settle: float = 0.15  # s of hold after the trajectory
    stiffness_jitter: float = 0.1
    arc_radius: float = 0.15
    arc_yaw_change_deg: float = 10.0
    cluster_size: int = 3
    cluster_spacing: float = 0.03


@dataclass(frozen=True)
class Trial:
    world: World
    initial: WorldState
    spec: TrajectorySpec
    duration: float
    u0: float
    zone: Zone
    kind: str
    seed: int


def sample_u0(zone: Zone, rng, cfg: ScenarioConfig):
    lo, hi = zone.bounds[:2]
    m = min(cfg.zone_margin, 0.2 * (hi - lo))
    return float(rng.uniform(lo + m, hi - m))


def jitter_stem(stem: StemModel, rng, amount):
    f1, f3, fm = 1.0 + amount * rng.uniform(-1, 1, size=3)
    mass = float(np.clip(stem.tip_mass * fm, 0.015, 0.035))
    return replace(stem, k1=stem.k1 * f1, k3=stem.k3 * f3, tip_mass=mass)


def place_finger(world: World, u0, yaw, gap, height):
    """EE start pose so that pushing along +y first touches the stem at ``u0``.

    Geometry is that of the undeflected stem; the finger axis is horizontal
    at ``height`` and rotated by ``yaw`` about z.
    """
    f = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    n = np.array([-math.sin(yaw), math.cos(yaw), 0.0])
    stem = world.stem
    anchor = np.asarray(stem.anchor, dtype=float)
    L = world.finger.length
    # foot of the stem line on the finger axis sits at u0*L; surface just touches
    touch = float(world.finger.radius(u0)) + stem.radius
    target_xy = anchor[:2]
    base_c = np.array([target_xy[0], target_xy[1], 0.0]) - u0 * L * f - touch * n
    if abs(math.cos(yaw)) < 1e-6:
        raise ValidationError("finger yaw leaves no approach component along the push")
    base0 = base_c - np.array([0.0, gap / math.cos(yaw), 0.0])
    base0[2] = height
    return Pose(base0, (0.0, 0.0, yaw))


def make_cluster(n, spacing, rng, world: World = World(), jitter=0.1):
    """Target stem plus ``n - 1`` jittered distractors ahead of it.

    Distractor anchors lie roughly ``spacing`` from the target in the half
    plane the finger pushes into (+y), so they are met part-way through a
    push and press on the membrane next to the target.
    """
    if n < 2:
        raise ValidationError("a cluster needs at least 2 stems")
    if not spacing > 0:
        raise ValidationError("cluster spacing must be positive")
    anchor = np.asarray(world.stem.anchor, dtype=float)
    placed = [anchor]
    distractors = []
    for _ in range(1, n):
        for _attempt in range(1000):
            ang = rng.uniform(math.radians(20.0), math.radians(160.0))
            r = spacing * rng.uniform(0.6, 1.2)
            cand = anchor + np.array([r * math.cos(ang), r * math.sin(ang), 0.0])
            if min(np.linalg.norm(cand - p) for p in placed) >= spacing / 2:
                break
        else:  # pragma: no cover - the half plane always has room for small n
            raise ValidationError(f"could not place {n} stems at spacing {spacing}")
        placed.append(cand)
        distractors.append(replace(jitter_stem(world.stem, rng, jitter), anchor=tuple(cand)))
    return replace(world, distractors=tuple(distractors))


def make_trial(world: World, u0, yaw, kind=LINEAR, cfg: ScenarioConfig = ScenarioConfig(), *, dq=(0.0, 0.0, 0.0),
               zone=None, seed=0) -> Trial:
    """Trial with explicit contact location and yaw; ``dq`` perturbs the final orientation."""
    start = place_finger(world, u0, yaw, cfg.approach_gap, cfg.finger_height)
    p0 = np.array(start.position)
    q0 = np.array(start.orientation)
    dq = np.asarray(dq, dtype=float)
    if kind == LINEAR:
        pf = p0 + np.array([0.0, cfg.push_distance, 0.0])
        spec = TrajectorySpec(LINEAR, p0, q0, pf, q0 + dq, cfg.v_max, cfg.a_max)
    elif kind == ARC:
        R = cfg.arc_radius
        sweep = cfg.push_distance / R
        center = p0 + np.array([0.0, 0.0, R])
        pf = center + R * np.array([0.0, math.sin(sweep), -math.cos(sweep)])
        qf = q0 + np.array([0.0, 0.0, math.radians(cfg.arc_yaw_change_deg) * np.sign(cfg.yaw_deg)]) + dq
        spec = TrajectorySpec(ARC, p0, q0, pf, qf, cfg.v_max, cfg.a_max, center=center)
    else:
        raise ValidationError(f"unknown trajectory kind {kind!r}")
    initial = WorldState.initial(world, start)
    return Trial(world, initial, spec, spec.duration + cfg.settle, float(u0), zone, kind, seed)


def build_trial(zone, kind=LINEAR, seed=0, *, cluster=False, cfg: ScenarioConfig = ScenarioConfig(),
                world: World = World()) -> Trial:
    """Benchmark trial: the seed fixes stem jitter, contact location and yaw.

    The cluster flag only adds distractors; the target trial is unchanged.
    """
    zone = Zone(zone)
    rng = Rng(seed, ("trial", zone.value, kind))
    stem = jitter_stem(world.stem, rng.spawn("stem"), cfg.stiffness_jitter)
    w = replace(world, stem=stem)
    u0 = sample_u0(zone, rng.spawn("u0"), cfg)
    yaw = math.radians(cfg.yaw_deg + cfg.yaw_jitter_deg * rng.spawn("yaw").uniform(-1, 1))
    if cluster:
        w = make_cluster(cfg.cluster_size, cfg.cluster_spacing, rng.spawn("cluster"), w, cfg.stiffness_jitter)
    return make_trial(w, u0, yaw, kind, cfg, zone=zone, seed=seed)
