"""World state container and the single-step API."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from ..core import ContactState, Pose, euler_to_matrix
from ..errors import IntegrationDivergedError, ValidationError
from . import kernels as K
from .models import World

EVENT_NAMES = (
    (K.EV_CONTACT_MADE, "contact_made"),
    (K.EV_CONTACT_LOST, "contact_lost"),
    (K.EV_SLIP_STARTED, "slip_started"),
    (K.EV_SLIP_ENDED, "slip_ended"),
)


def decode_events(flags):
    return [name for bit, name in EVENT_NAMES if int(flags) & bit]


def _contact_from_block(st):
    if st[K.S_CONTACT] < 0.5:
        return ContactState()
    return ContactState(
        in_contact=True,
        u=float(st[K.S_UATT]),
        penetration=float(st[K.S_PEN]),
        normal_force=float(st[K.S_FN]),
        tangential_force=float(st[K.S_FT]),
        sticking=bool(st[K.S_STICK] > 0.5),
    )


class WorldState:
    """Packed simulator state.

    Index 0 of ``stems`` is the target stem; the rest are cluster distractors.
    Instances are treated as values: every API returns a fresh copy.
    """

    __slots__ = ("ee", "stems")

    def __init__(self, ee, stems):
        self.ee = np.array(ee, dtype=float)
        self.stems = np.array(stems, dtype=float).reshape(-1, K.S_SIZE)

    @classmethod
    def initial(cls, world: World, ee_pose: Pose, time: float = 0.0, deflection=None):
        ee = np.zeros(K.EE_SIZE)
        ee[K.EE_POS:K.EE_POS + 3] = ee_pose.position
        ee[K.EE_R:K.EE_R + 9] = ee_pose.rotation.reshape(-1)
        ee[K.EE_TIME] = time
        stems = np.zeros((len(world.stems), K.S_SIZE))
        stems[:, K.S_UATT] = K.NO_ATTACH
        stems[:, K.S_SIDE] = 1.0
        if deflection is not None:
            stems[0, K.S_TH:K.S_TH + 2] = deflection
        return cls(ee, stems)

    def copy(self):
        return WorldState(self.ee.copy(), self.stems.copy())

    @property
    def time(self):
        return float(self.ee[K.EE_TIME])

    @property
    def ee_rotation(self):
        return self.ee[K.EE_R:K.EE_R + 9].reshape(3, 3)

    @property
    def ee_pose(self):
        return Pose.from_matrix(self.ee[K.EE_POS:K.EE_POS + 3], self.ee_rotation)

    @property
    def deflection(self):
        return self.stems[0, K.S_TH:K.S_TH + 2].copy()

    @property
    def angular_velocity(self):
        return self.stems[0, K.S_OM:K.S_OM + 2].copy()

    @property
    def u_att(self):
        st = self.stems[0]
        return float(st[K.S_UATT]) if st[K.S_CONTACT] > 0.5 else None

    @property
    def contact(self) -> ContactState:
        return _contact_from_block(self.stems[0])

    def stem_contact(self, i) -> ContactState:
        return _contact_from_block(self.stems[i])

    @property
    def contacts(self):
        return [_contact_from_block(s) for s in self.stems]

    @property
    def distractors(self):
        return [self.stems[i].copy() for i in range(1, len(self.stems))]

    def contact_point(self, world: World):
        """World position of the target's contact on the stem, or None."""
        st = self.stems[0]
        if st[K.S_CONTACT] < 0.5:
            return None
        sp = world.stem.params()
        d, _, _ = K.stem_geometry.py_func(st[K.S_TH], st[K.S_TH + 1], sp)
        return sp[K.P_ANCHOR:K.P_ANCHOR + 3] + st[K.S_ELL] * d

    def stem_direction(self, world: World, i=0):
        st = self.stems[i]
        sp = world.stems[i].params()
        d, _, _ = K.stem_geometry.py_func(st[K.S_TH], st[K.S_TH + 1], sp)
        return d

    def contact_frame(self, world: World):
        """(point, axis) of the target contact line, or (None, None).

        The axis is ``normalize(n x f)`` with ``n`` the contact normal pointing
        from the finger to the stem and ``f`` the finger axis; it runs along
        the stem through the contact point.
        """
        point = self.contact_point(world)
        if point is None:
            return None, None
        _, f = self.finger_axis(world)
        d = self.stem_direction(world)
        n = np.cross(d, f)
        n *= self.stems[0, K.S_SIDE] / np.linalg.norm(n)
        axis = np.cross(n, f)
        return point, axis / np.linalg.norm(axis)

    def finger_axis(self, world: World):
        base, axis = K.finger_frame.py_func(self.ee, world.finger_params())
        return base, axis


@dataclass
class StepResult:
    next: WorldState
    events: List[str] = field(default_factory=list)


def energy(state: WorldState, world: World, i=0):
    """Elastic + gravitational + kinetic energy of one stem (J)."""
    stem = world.stems[i]
    st = state.stems[i]
    th = st[K.S_TH:K.S_TH + 2]
    om = st[K.S_OM:K.S_OM + 2]
    phi2 = float(th @ th)
    d = state.stem_direction(world, i)
    d0, _, _ = stem.basis()
    grav = stem.tip_mass * stem.length * world.gravity * (d[2] - d0[2])
    return 0.5 * stem.inertia * float(om @ om) + 0.5 * stem.k1 * phi2 + 0.25 * stem.k3 * phi2 ** 2 + grav


_FIELDS = {1: "deflection", 2: "angular_velocity"}


def raise_on_status(status, tick=None):
    if status == 0:
        return
    if status < 0:
        raise IntegrationDivergedError("ee_pose", tick)
    stem, code = divmod(status - 1, 10)
    name = _FIELDS.get(code + 1, "state")
    prefix = "" if stem == 0 else f"distractors[{stem - 1}]."
    raise IntegrationDivergedError(prefix + name, tick)


def _check_input(state):
    for name, arr in (("ee_pose", state.ee), ("deflection", state.stems[:, K.S_TH:K.S_TH + 2]),
                      ("angular_velocity", state.stems[:, K.S_OM:K.S_OM + 2])):
        if not np.all(np.isfinite(arr)):
            raise IntegrationDivergedError(name)


def advance(state: WorldState, world: World, twist, dt, nsteps, stem_params=None, finger_params=None):
    """Advance in place by ``nsteps`` ticks; returns (records, events)."""
    twist = np.asarray(twist, dtype=float)
    rec = np.empty((nsteps, K.R_SIZE))
    ev = np.zeros((nsteps, state.stems.shape[0]), dtype=np.int64)
    sp = world.stem_params() if stem_params is None else stem_params
    fp = world.finger_params() if finger_params is None else finger_params
    status = K.advance(state.ee, state.stems, sp, fp, twist, float(dt), int(nsteps), rec, ev)
    raise_on_status(status)
    return rec, ev


def step(state: WorldState, ee_velocity, dt: float, world: World, rng=None) -> StepResult:
    """One physics tick. ``rng`` is accepted for API symmetry; physics is noiseless."""
    if not (0.0 < dt <= 2e-3):
        raise ValidationError(f"dt must lie in (0, 2 ms], got {dt}")
    twist = np.asarray(ee_velocity, dtype=float).reshape(-1)
    if twist.shape != (6,) or not np.all(np.isfinite(twist)):
        raise ValidationError("ee_velocity must be a finite 6-vector twist")
    _check_input(state)
    nxt = state.copy()
    _, ev = advance(nxt, world, twist, dt, 1)
    return StepResult(nxt, decode_events(ev[0, 0]))
