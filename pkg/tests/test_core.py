import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tactipush.core import (Action, ContactState, Pose, Rng, TactileFrame, euler_to_matrix, matrix_to_euler,
                            resample_actions, synchronize)
from tactipush.errors import UnsynchronizableError, ValidationError


def frame(t, res=32):
    return TactileFrame(np.zeros((res, res, 3)), t)


def action(t, x=0.0):
    return Action(Pose([x, 0.0, 0.0]), t)


def brute_force_pairs(frame_times, action_times, tol):
    """All-pairs nearest match; ties go to the earlier action."""
    out, dropped = [], 0
    order = sorted(range(len(action_times)), key=lambda j: action_times[j])
    for tf in sorted(frame_times):
        best = None
        for j in order:
            d = abs(tf - action_times[j])
            if best is None or d < best[0]:
                best = (d, action_times[j])
        if best[0] > tol:
            dropped += 1
        else:
            out.append((tf, best[1]))
    return out, dropped


class TestPose:
    def test_angles_wrap_into_half_open_interval(self):
        p = Pose([0, 0, 0], [math.pi, -math.pi, 3 * math.pi])
        assert np.all(p.orientation > -math.pi) and np.all(p.orientation <= math.pi)
        assert p.orientation[1] == pytest.approx(math.pi)

    def test_rejects_non_finite_position(self):
        with pytest.raises(ValidationError):
            Pose([np.nan, 0, 0])

    @given(st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3))
    def test_euler_round_trip(self, angles):
        angles = np.array(angles)
        angles[1] = np.clip(angles[1], -1.5, 1.5)  # away from gimbal lock
        R = euler_to_matrix(angles)
        np.testing.assert_allclose(euler_to_matrix(matrix_to_euler(R)), R, atol=1e-12)


class TestTypes:
    def test_frame_range_enforced(self):
        with pytest.raises(ValidationError):
            TactileFrame(np.full((32, 32, 3), 1.5))
        with pytest.raises(ValidationError):
            TactileFrame(np.zeros((48, 48, 3)))

    def test_contact_invariants(self):
        with pytest.raises(ValidationError):
            ContactState(in_contact=False, penetration=0.001)
        with pytest.raises(ValidationError):
            ContactState(in_contact=True, u=1.2)
        assert ContactState().normal_force == 0.0


class TestSynchronize:
    def test_dense_action_stream(self):
        frames = [frame(k / 60) for k in range(3)]
        actions = [action(i / 1000) for i in range(int(2 / 60 * 1000) + 2)]
        res = synchronize(frames, actions)
        assert len(res) == 3 and res.dropped == 0
        assert max(s.skew for s in res) <= 0.5e-3

    def test_out_of_tolerance_dropped(self):
        res = synchronize([frame(0.5)], [action(0.0)], tolerance=0.01)
        assert len(res) == 0 and res.dropped == 1

    def test_empty_actions(self):
        with pytest.raises(UnsynchronizableError):
            synchronize([frame(0.0)], [])

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=50, unique=True),
           st.lists(st.floats(0, 1), min_size=1, max_size=50, unique=True),
           st.floats(0.0, 0.2))
    def test_matches_brute_force_oracle(self, tf, ta, tol):
        res = synchronize([frame(t) for t in tf], [action(t) for t in ta], tolerance=tol)
        want, dropped = brute_force_pairs(tf, ta, tol)
        got = [(s.frame.timestamp, s.action.timestamp) for s in res]
        assert got == want
        assert res.dropped == dropped
        assert res.dropped + len(res) == len(tf)

    def test_delivery_order_irrelevant(self):
        rng = np.random.default_rng(3)
        tf = np.sort(rng.uniform(0, 1, 20))
        ta = np.sort(rng.uniform(0, 1, 60))
        base = synchronize([frame(t) for t in tf], [action(t) for t in ta])
        for perm in itertools.islice(itertools.permutations(range(5)), 10):
            fr = [frame(t) for t in tf]
            fr[:5] = [fr[i] for i in perm]
            acts = [action(t) for t in ta[::-1]]
            res = synchronize(fr, acts)
            assert [(s.frame.timestamp, s.action.timestamp) for s in res] == \
                   [(s.frame.timestamp, s.action.timestamp) for s in base]


class TestResample:
    def test_count_for_one_second(self):
        acts = [action(i / 1000) for i in range(1001)]
        assert len(resample_actions(acts, 60)) == 61

    def test_constant_pose_preserved(self):
        acts = [Action(Pose([0.1, 0.2, 0.3], [0.1, 0, 0]), i / 1000) for i in range(500)]
        out = resample_actions(acts, 60)
        assert all(np.array_equal(a.as_vector(), acts[0].as_vector()) for a in out)

    def test_linear_ramp_within_half_step(self):
        v = 0.2
        acts = [action(i / 1000, v * i / 1000) for i in range(1001)]
        for a in resample_actions(acts, 60):
            assert abs(a.pose.position[0] - v * a.timestamp) <= v * 0.5e-3 + 1e-12

    def test_non_monotonic_rejected(self):
        with pytest.raises(ValidationError):
            resample_actions([action(0.0), action(0.002), action(0.001)], 60)

    def test_rate_above_source_rejected(self):
        with pytest.raises(ValidationError):
            resample_actions([action(i / 100) for i in range(10)], 1000)


class TestRng:
    def test_same_seed_same_stream(self):
        a, b = Rng(42), Rng(42)
        assert np.array_equal(a.random(100), b.random(100))

    def test_spawn_independent_of_parent_consumption(self):
        a, b = Rng(7), Rng(7)
        a.random(1000)
        assert np.array_equal(a.spawn("x", 1).random(10), b.spawn("x", 1).random(10))
        assert not np.array_equal(b.spawn("x", 1).random(10), b.spawn("x", 2).random(10))
