"""Stem, finger and world parameter models."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from ..core import Pose
from ..errors import ValidationError
from . import kernels as K


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0:
        raise ValidationError("direction must be non-zero")
    return v / n


@dataclass(frozen=True)
class StemModel:
    """Rigid stem on a 2-DOF stiffening torsional spring, tip mass at the end."""

    anchor: Tuple[float, float, float] = (0.0, 0.0, 0.25)
    rest_direction: Tuple[float, float, float] = (0.0, 0.0, -1.0)
    length: float = 0.15
    tip_mass: float = 0.025
    k1: float = 0.12  # N*m/rad
    k3: float = 0.08  # N*m/rad^3
    damping: float = 6e-3  # N*m*s/rad
    radius: float = 0.0015

    def __post_init__(self):
        if not (self.k1 > 0 and self.damping > 0 and self.k3 >= 0):
            raise ValidationError("stem requires k1 > 0, damping > 0, k3 >= 0")
        if self.length <= 0 or self.tip_mass <= 0:
            raise ValidationError("stem length and tip mass must be positive")

    def basis(self):
        d0 = _unit(self.rest_direction)
        ref = np.array([1.0, 0.0, 0.0]) if abs(d0[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        e1 = _unit(ref - ref.dot(d0) * d0)
        e2 = np.cross(d0, e1)
        return d0, e1, e2

    def params(self):
        p = np.zeros(K.P_SIZE)
        d0, e1, e2 = self.basis()
        p[K.P_ANCHOR:K.P_ANCHOR + 3] = self.anchor
        p[K.P_D0:K.P_D0 + 3] = d0
        p[K.P_E1:K.P_E1 + 3] = e1
        p[K.P_E2:K.P_E2 + 3] = e2
        p[K.P_LEN] = self.length
        p[K.P_MASS] = self.tip_mass
        p[K.P_K1] = self.k1
        p[K.P_K3] = self.k3
        p[K.P_DAMP] = self.damping
        p[K.P_RADIUS] = self.radius
        return p

    @property
    def inertia(self):
        return self.tip_mass * self.length ** 2


@dataclass(frozen=True)
class FingerModel:
    """Half-conic tactile finger; profiles are linear in the axial coordinate."""

    length: float = 0.06
    radius_base: float = 0.010
    radius_tip: float = 0.004
    compliance_base: float = 4e-3  # m/N
    compliance_tip: float = 1e-3
    limit_base: float = 0.020  # deformation limit, m
    limit_tip: float = 0.012
    mu_s: float = 0.5
    mu_k: float = 0.35
    shear_stiffness: float = 300.0  # N/m, tangential pre-sliding stiffness
    mount_offset: Pose = field(default_factory=lambda: Pose(np.zeros(3), np.zeros(3)))

    def __post_init__(self):
        if not (self.compliance_base > self.compliance_tip > 0):
            raise ValidationError("compliance must decrease from base to tip and stay positive")
        if min(self.radius_base, self.radius_tip) <= 0:
            raise ValidationError("finger radius must be positive")
        if not (0 < self.mu_k <= self.mu_s):
            raise ValidationError("friction requires 0 < mu_k <= mu_s")
        if self.length <= 0 or self.shear_stiffness <= 0:
            raise ValidationError("finger length and shear stiffness must be positive")

    def radius(self, u):
        return self.radius_base + (self.radius_tip - self.radius_base) * np.clip(u, 0.0, 1.0)

    def compliance(self, u):
        return self.compliance_base + (self.compliance_tip - self.compliance_base) * np.clip(u, 0.0, 1.0)

    def deformation_limit(self, u):
        return self.limit_base + (self.limit_tip - self.limit_base) * np.clip(u, 0.0, 1.0)

    def params(self, gravity):
        p = np.zeros(K.F_SIZE)
        p[K.F_LEN] = self.length
        p[K.F_RBASE] = self.radius_base
        p[K.F_RTIP] = self.radius_tip
        p[K.F_CBASE] = self.compliance_base
        p[K.F_CTIP] = self.compliance_tip
        p[K.F_MUS] = self.mu_s
        p[K.F_MUK] = self.mu_k
        p[K.F_KT] = self.shear_stiffness
        p[K.F_MPOS:K.F_MPOS + 3] = self.mount_offset.position
        p[K.F_MROT:K.F_MROT + 9] = self.mount_offset.rotation.reshape(-1)
        p[K.F_GRAV] = gravity
        return p


@dataclass(frozen=True)
class World:
    """Everything the integrator needs besides the evolving state."""

    stem: StemModel = field(default_factory=StemModel)
    finger: FingerModel = field(default_factory=FingerModel)
    distractors: Tuple[StemModel, ...] = ()
    gravity: float = 9.81
    physics_dt: float = 1e-3

    @property
    def stems(self):
        return (self.stem,) + tuple(self.distractors)

    def stem_params(self):
        return np.stack([s.params() for s in self.stems])

    def finger_params(self):
        return self.finger.params(self.gravity)

    def without_distractors(self):
        return World(self.stem, self.finger, (), self.gravity, self.physics_dt)
