import math

import numpy as np
import pytest
from scipy.optimize import brentq

from tactipush.bench.scenario import build_trial, make_cluster, place_finger
from tactipush.control import OpenLoop
from tactipush.core import Pose, Rng
from tactipush.errors import IntegrationDivergedError, NonFiniteCommandError, ValidationError
from tactipush.simworld import kernels as K
from tactipush.simworld.models import FingerModel, StemModel, World
from tactipush.simworld.rollout import ZeroCommand, frame_tick, rollout
from tactipush.simworld.state import WorldState, energy, step


def free_state(world=World(), deflection=None):
    # finger parked far from the stem
    return WorldState.initial(world, Pose((1.0, 1.0, 0.0), (0, 0, 0)), deflection=deflection)


class Constant:
    def __init__(self, twist, until=math.inf):
        self.twist = np.asarray(twist, float)
        self.until = until

    def __call__(self, obs):
        return self.twist if obs.t < self.until else np.zeros(6)


def push_log(zone="Zone1", seed=0, **kw):
    trial = build_trial(zone, seed=seed)
    return rollout(trial.initial, OpenLoop(trial.spec), trial.duration, world=trial.world, **kw)


# step ---------------------------------------------------------------------

def test_equilibrium_is_fixed_point():
    world = World()
    s0 = free_state(world)
    res = step(s0, np.zeros(6), 1e-3, world)
    assert res.events == []
    assert res.next.time == pytest.approx(1e-3)
    # closest-point diagnostics are refreshed every tick; the dynamic state is not
    assert np.array_equal(res.next.stems[:, :K.S_USTAR], s0.stems[:, :K.S_USTAR])
    assert np.array_equal(res.next.ee[:K.EE_TIME], s0.ee[:K.EE_TIME])
    c = res.next.contact
    assert not c.in_contact and c.normal_force == 0 and c.tangential_force == 0


@pytest.mark.parametrize("gravity", [0.0, 9.81])
def test_free_response_energy_never_increases(gravity):
    world = World(gravity=gravity)
    state = free_state(world, deflection=(0.3, -0.2))
    e_prev = energy(state, world)
    for _ in range(3000):
        state = step(state, np.zeros(6), 1e-3, world).next
        e = energy(state, world)
        assert e <= e_prev + 1e-12
        e_prev = e
    assert e_prev < 0.05 * energy(free_state(world, deflection=(0.3, -0.2)), world)


def test_step_preconditions():
    world = World()
    s = free_state(world)
    for dt in (0.0, -1e-3, 2.5e-3):
        with pytest.raises(ValidationError):
            step(s, np.zeros(6), dt, world)
    with pytest.raises(ValidationError):
        step(s, [0, 0, np.nan, 0, 0, 0], 1e-3, world)


@pytest.mark.parametrize("col,name", [(K.S_TH, "deflection"), (K.S_OM + 1, "angular_velocity")])
def test_nan_state_names_field(col, name):
    world = World()
    s = free_state(world)
    s.stems[0, col] = np.nan
    with pytest.raises(IntegrationDivergedError) as info:
        step(s, np.zeros(6), 1e-3, world)
    assert info.value.field == name


def _equilibrium_oracle(world, u, y_f, depth):
    """Deflection angle balancing spring torque against the contact force.

    The finger axis is perpendicular to the plane of deflection, so the
    problem reduces to one angle: the stem line passes the finger axis at
    distance |depth sin(th) - y_f cos(th)| with lever arm
    y_f sin(th) + depth cos(th).
    """
    stem, finger = world.stem, world.finger
    reach = finger.radius_base + (finger.radius_tip - finger.radius_base) * u + stem.radius
    comp = finger.compliance_base + (finger.compliance_tip - finger.compliance_base) * u

    def balance(th):
        dist = abs(depth * math.sin(th) - y_f * math.cos(th))
        lever = y_f * math.sin(th) + depth * math.cos(th)
        fn = max(0.0, reach - dist) / comp
        return stem.k1 * th + stem.k3 * th ** 3 - lever * fn

    # at th0 the stem line crosses the finger axis (deepest overlap); past
    # the root the stem clears the membrane
    th0 = max(0.0, math.atan2(y_f, depth))
    return brentq(balance, th0, 1.0, xtol=1e-14)


@pytest.mark.parametrize("u0,push", [(0.3, 0.012), (0.7, 0.02)])
def test_static_push_matches_bisection_equilibrium(u0, push):
    world = World(gravity=0.0)
    start = place_finger(world, u0, 0.0, 0.002, 0.15)
    state = WorldState.initial(world, start)
    v = 0.02
    log = rollout(state, Constant([0, v, 0, 0, 0, 0], until=(0.002 + push) / v), 6.0, world=world)
    end_y = log.ee_positions[-1, 1]
    assert log.ticks[-1, K.R_CONTACT] > 0.5
    th = log.ticks[-1, K.R_TH:K.R_TH + 2]
    d = math.sqrt(th @ th)
    assert abs(log.ticks[-1, K.R_OM:K.R_OM + 2]).max() < 1e-8
    depth = world.stem.anchor[2] - start.position[2]
    expected = _equilibrium_oracle(world, u0, end_y - world.stem.anchor[1], depth)
    assert d == pytest.approx(expected, rel=1e-3)
    assert log.ticks[-1, K.R_U] == pytest.approx(u0, abs=1e-12)


# contact invariants -------------------------------------------------------

@pytest.fixture(scope="module")
def pushes():
    return [push_log(z, seed) for z in ("Zone1", "Zone2", "Zone3") for seed in range(2)]


def test_stick_phase_keeps_attachment_exactly(pushes):
    checked = 0
    for log in pushes:
        t = log.ticks
        both = (t[1:, K.R_STICK] > 0.5) & (t[:-1, K.R_STICK] > 0.5) & (t[1:, K.R_CONTACT] > 0.5) \
            & (t[:-1, K.R_CONTACT] > 0.5)
        assert np.array_equal(t[1:, K.R_U][both], t[:-1, K.R_U][both])
        checked += both.sum()
    assert checked > 500


def test_slip_phase_friction_equality(pushes):
    mu_k = World().finger.mu_k
    sliding = 0
    for log in pushes:
        t = log.ticks
        m = (t[:, K.R_CONTACT] > 0.5) & (t[:, K.R_STICK] < 0.5)
        assert np.all(np.abs(np.abs(t[m, K.R_FT]) - mu_k * t[m, K.R_FN]) <= 1e-9)
        sliding += m.sum()
    assert sliding > 10


def test_forces_nonnegative_and_zero_out_of_contact(pushes):
    for log in pushes:
        t = log.ticks
        assert np.all(t[:, K.R_FN] >= 0) and np.all(t[:, K.R_PEN] >= 0)
        off = t[:, K.R_CONTACT] < 0.5
        assert np.all(t[off, K.R_FN] == 0) and np.all(t[off, K.R_PEN] == 0) and np.all(t[off, K.R_FT] == 0)


def test_attachment_present_iff_in_contact(pushes):
    for log in pushes:
        for r in log.records:
            assert (r["u_true"] is not None) == r["in_contact"]
            if r["in_contact"]:
                assert 0.0 <= r["u_true"] <= 1.0


def test_halving_dt_converges():
    a = push_log("Zone3", 3)
    b = push_log("Zone3", 3, physics_dt=5e-4)
    assert a.ticks[-1, K.R_CONTACT] > 0.5 and b.ticks[-1, K.R_CONTACT] > 0.5
    assert abs(a.ticks[-1, K.R_U] - b.ticks[-1, K.R_U]) < 1e-3


def test_time_reversed_trajectory_keeps_penetration_nonnegative():
    trial = build_trial("Zone2", seed=1)
    fwd = rollout(trial.initial, OpenLoop(trial.spec), trial.duration, world=trial.world)
    twists = [np.asarray(r["twist"]) for r in fwd.records]
    back = iter(reversed(twists))

    def reverse(obs):
        return -next(back, np.zeros(6))

    end = WorldState(np.concatenate([fwd.ticks[-1, K.R_POS:K.R_POS + 12], [0.0]]), trial.initial.stems)
    log = rollout(end, reverse, trial.duration, world=trial.world)
    assert np.all(log.ticks[:, K.R_PEN] >= 0)
    assert np.all(log.ticks[:, K.R_FN] >= 0)


# rollout ------------------------------------------------------------------

def test_idle_rollout_shape():
    log = rollout(free_state(), ZeroCommand(), 1.0)
    assert log.n_ticks == 1000
    assert log.n_frames == 60
    assert all(r["u_true"] is None for r in log.records)
    assert not log.events.any()


def test_frame_schedule_handles_non_dividing_period():
    # 1/60 s is not a whole number of 1 ms ticks
    assert [frame_tick(k, 60.0, 1e-3) for k in range(4)] == [0, 17, 34, 50]
    assert frame_tick(3, 60.0, 1e-3) == 50


def test_contact_made_once_before_any_slip(pushes):
    for log in pushes:
        seq = log.event_sequence()
        names = [n for _, n in seq]
        assert "contact_made" in names
        first_slip = next((i for i, n in enumerate(names) if n == "slip_started"), len(names))
        assert names[:first_slip].count("contact_made") == 1
        ticks = [t for t, _ in seq]
        assert ticks == sorted(ticks)


def test_non_finite_command_aborts_with_tick():
    def bad(obs):
        return np.full(6, np.nan) if obs.k == 5 else np.zeros(6)

    with pytest.raises(NonFiniteCommandError) as info:
        rollout(free_state(), bad, 1.0)
    assert info.value.tick == 5
    assert info.value.log.meta["aborted_at"] == 5
    assert len(info.value.log.records) == 6


def test_identical_seeds_give_bit_identical_logs(tmp_path):
    a = push_log("Zone2", 4, rng=Rng(9), noise_std=0.02, keep_frames=True)
    b = push_log("Zone2", 4, rng=Rng(9), noise_std=0.02, keep_frames=True)
    a.write(tmp_path / "a")
    b.write(tmp_path / "b")
    for name in ("ticks.npz", "control.jsonl", "meta.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_rollout_preconditions():
    with pytest.raises(ValidationError):
        rollout(free_state(), ZeroCommand(), 1.0, physics_dt=5e-3)
    with pytest.raises(ValidationError):
        rollout(free_state(), ZeroCommand(), 0.0)


# clusters -----------------------------------------------------------------

def test_cluster_needs_two_stems_and_positive_spacing():
    with pytest.raises(ValidationError):
        make_cluster(1, 0.03, Rng(0))
    with pytest.raises(ValidationError):
        make_cluster(3, 0.0, Rng(0))


def test_cluster_geometry_reproducible():
    a = make_cluster(3, 0.03, Rng(11))
    b = make_cluster(3, 0.03, Rng(11))
    assert a == b
    anchors = [np.array(s.anchor) for s in a.stems]
    assert len(anchors) == 3
    for i in range(3):
        for j in range(i + 1, 3):
            assert np.linalg.norm(anchors[i] - anchors[j]) >= 0.015
    for s in a.distractors:
        assert 0.015 <= s.tip_mass <= 0.035


def test_cluster_without_distractors_equals_single_stem():
    single = build_trial("Zone1", seed=2)
    clustered = build_trial("Zone1", seed=2, cluster=True)
    assert len(clustered.world.distractors) == 2
    ablated = clustered.world.without_distractors()
    assert ablated == single.world
    start = WorldState.initial(ablated, clustered.initial.ee_pose)
    a = rollout(single.initial, OpenLoop(single.spec), single.duration, world=single.world)
    b = rollout(start, OpenLoop(clustered.spec), clustered.duration, world=ablated)
    assert np.array_equal(a.ticks, b.ticks)


def test_distractors_touch_the_finger():
    trial = build_trial("Zone3", seed=0, cluster=True)
    log = rollout(trial.initial, OpenLoop(trial.spec), trial.duration, world=trial.world)
    assert log.events[:, 1:].any()


# models -------------------------------------------------------------------

def test_model_validation():
    with pytest.raises(ValidationError):
        StemModel(k1=0.0)
    with pytest.raises(ValidationError):
        FingerModel(compliance_base=1e-3, compliance_tip=2e-3)
    with pytest.raises(ValidationError):
        FingerModel(mu_s=0.3, mu_k=0.4)
    f = FingerModel()
    assert f.compliance(0.0) == 4e-3 and f.compliance(1.0) == 1e-3
    assert f.radius(0.5) > 0
