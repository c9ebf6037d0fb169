import numpy as np
import pytest

from tactipush.bench.scenario import build_trial
from tactipush.control import OpenLoop
from tactipush.errors import ModelNotReadyError, TrainingFailedError, ValidationError
from tactipush.forecast import (ForecastContext, ForecastResult, ImageTfm, ImageTfmHyperparams, Persistence,
                                PhysicsOracle, PredictorConfig, StateTfm, StateTfmHyperparams, predict,
                                train_tfm)
from tactipush.forecast.base import pose_matrix
from tactipush.forecast.image_tfm import (FrameWindows, horizon_mse, image_windows, persistence_mse,
                                          sampling_probability, step_actions, train_image_tfm)
from tactipush.forecast.state_tfm import train_state_tfm
from tactipush.forecast.windows import WindowSet, backfill, dataset_windows
from tactipush.nn.checkpoint import CheckpointMismatch
from tactipush.simworld.rollout import rollout
from tactipush.tactile.render import rest_image

CFG = PredictorConfig()


def straight_poses(n, step=(0.0, 0.001, 0.0)):
    return np.stack([pose_matrix(np.asarray(step) * i, np.eye(3)) for i in range(n)])


def context(s_last=0.4, c=10, H=10):
    poses = straight_poses(c + H)
    return ForecastContext(np.full(c, s_last), poses[:c], poses[c:])


# contracts ----------------------------------------------------------------

def test_config_invariants():
    with pytest.raises(ValidationError):
        PredictorConfig(context=1)
    with pytest.raises(ValidationError):
        PredictorConfig(horizon=0)
    assert CFG.total == 20


def test_result_range_enforced():
    with pytest.raises(ValidationError):
        ForecastResult(np.array([0.2, 1.2]), "x")


def test_persistence_repeats_last():
    res = Persistence(CFG).forecast(context(0.37))
    assert len(res) == CFG.horizon
    assert np.all(res.s_hat == 0.37)


def test_length_mismatch_rejected():
    poses = straight_poses(20)
    with pytest.raises(ValidationError):
        predict(Persistence(CFG), None, poses[:9], poses[10:], context_s=np.full(9, 0.5))
    with pytest.raises(ValidationError):
        predict(Persistence(CFG), None, poses[:10], poses[10:18], context_s=np.full(10, 0.5))
    with pytest.raises(ValidationError):
        predict(Persistence(CFG), None, poses[:10], poses[10:])


def test_untrained_backends_not_ready():
    poses = straight_poses(20)
    for backend in (StateTfm(CFG), ImageTfm(CFG)):
        with pytest.raises(ModelNotReadyError):
            predict(backend, None, poses[:10], poses[10:], context_s=np.full(10, 0.5))


def test_backfill():
    s = backfill([np.nan, np.nan, 0.3, np.nan, 0.4])
    assert np.allclose(s, [0.3, 0.3, 0.3, 0.3, 0.4])


# physics oracle -----------------------------------------------------------

def test_oracle_static_world_gives_constant_forecast():
    trial = build_trial("Zone3", seed=0)
    grabbed = {}

    class Grab(OpenLoop):
        def tick(self, obs):
            grabbed["state"] = obs.state
            return super().tick(obs)

    # hold the finger still long after the push so the stem comes to rest
    rollout(trial.initial, Grab(trial.spec), trial.duration + 4.0, world=trial.world)
    st = grabbed["state"]
    assert st.contact.sticking and np.abs(st.angular_velocity).max() < 1e-6
    ctx = context(st.u_att)
    ctx.state, ctx.world = st, trial.world
    ctx.planned_twists = np.zeros((10, 6))
    ctx.planned_ticks = np.arange(11) * 17
    res = PhysicsOracle(CFG).forecast(ctx)
    assert np.all(res.s_hat == st.u_att)


def test_oracle_matches_executed_future_exactly():
    trial = build_trial("Zone1", seed=1)
    grabbed = {}
    K = 40

    class Grab(OpenLoop):
        def tick(self, obs):
            if obs.k == K:
                grabbed["state"] = obs.state
            return super().tick(obs)

    log = rollout(trial.initial, Grab(trial.spec), trial.duration, world=trial.world)
    assert grabbed["state"].u_att is not None
    H = CFG.horizon
    ctx = context(grabbed["state"].u_att)
    ctx.state, ctx.world = grabbed["state"], trial.world
    ctx.planned_twists = np.array([log.records[K + i]["twist"] for i in range(H)])
    ctx.planned_ticks = log.frame_ticks[K:K + H + 1]
    res = PhysicsOracle(CFG).forecast(ctx)
    truth = [log.records[K + 1 + i]["u_true"] for i in range(H)]
    assert all(t is not None for t in truth)
    assert np.array_equal(res.s_hat, np.array(truth))


def test_oracle_needs_state():
    with pytest.raises(ModelNotReadyError):
        PhysicsOracle(CFG).forecast(context())


# state forecaster ---------------------------------------------------------

def _per_rollout_mae(pred, target, group):
    err = np.abs(pred - target).mean(axis=1)
    return np.array([err[group == g].mean() for g in np.unique(group)])


def test_state_tfm_beats_persistence_on_held_out(state_tfm, push_test, clm32):
    w = dataset_windows(push_test, CFG, clm32)
    pred = state_tfm.predict_windows(w.s_ctx, w.poses_ctx, w.planned)
    persist = np.repeat(w.s_ctx[:, -1:], CFG.horizon, axis=1)
    model = _per_rollout_mae(pred, w.target, w.group)
    base = _per_rollout_mae(persist, w.target, w.group)
    assert len(model) >= 20
    assert model.mean() < base.mean()


def test_state_tfm_is_action_sensitive(state_tfm, push_test, clm32):
    w = dataset_windows(push_test[:5], CFG, clm32)
    shifted = w.planned.copy()
    shifted[:, :, 1, 3] += np.linspace(0.002, 0.02, CFG.horizon)
    a = state_tfm.predict_windows(w.s_ctx, w.poses_ctx, w.planned)
    b = state_tfm.predict_windows(w.s_ctx, w.poses_ctx, shifted)
    assert np.abs(a - b).mean() > 0


def test_state_tfm_training_curve(state_tfm):
    curve = state_tfm.curve
    assert len(curve.train) == StateTfmHyperparams().epochs
    assert curve.train[-1] < curve.train[0]
    assert curve.validation[-1] <= curve.validation[0]


def _linear_drift_windows(n, rng, gain=5.0):
    c, H = CFG.context, CFG.horizon
    poses = np.empty((n, c + H, 4, 4))
    s = np.empty((n, c + H))
    for i in range(n):
        v = rng.uniform(0.0005, 0.0015)
        poses[i] = straight_poses(c + H, (0.0, v, 0.0))
        poses[i, :, :3, 3] += rng.uniform(-0.05, 0.05, size=3)
        s[i] = rng.uniform(0.2, 0.5) + gain * v * np.arange(c + H)
    return WindowSet(s[:, :c], poses[:, :c], poses[:, c:], s[:, c:], np.arange(n) // 4)


def test_state_tfm_learns_linear_drift():
    rng = np.random.default_rng(0)
    train = _linear_drift_windows(800, rng)
    model = train_state_tfm(train, CFG, StateTfmHyperparams(epochs=60), np.random.default_rng(1))
    test = _linear_drift_windows(100, np.random.default_rng(2))
    pred = model.predict_windows(test.s_ctx, test.poses_ctx, test.planned)
    assert np.abs(pred - test.target).mean() < 0.01


def test_state_tfm_nan_training_fails():
    w = _linear_drift_windows(40, np.random.default_rng(0))
    w.target[3, 2] = np.nan
    with pytest.raises(TrainingFailedError):
        train_state_tfm(w, CFG, StateTfmHyperparams(epochs=2), np.random.default_rng(0))


def test_state_tfm_checkpoint(tmp_path, state_tfm):
    state_tfm.save(tmp_path / "s.npz", "h")
    back = StateTfm.load(tmp_path / "s.npz", "h")
    ctx = context(0.5)
    assert np.array_equal(back.forecast(ctx).s_hat, state_tfm.forecast(ctx).s_hat)
    with pytest.raises(CheckpointMismatch):
        StateTfm.load(tmp_path / "s.npz", "other")
    with pytest.raises(CheckpointMismatch):
        ImageTfm.load(tmp_path / "s.npz")


def test_train_tfm_needs_fifty_rollouts(push100):
    with pytest.raises(ValidationError):
        train_tfm("state", push100[:49])
    with pytest.raises(ValidationError):
        train_tfm("oracle", push100)


# image forecaster ---------------------------------------------------------

def test_step_actions_of_straight_push():
    a = step_actions(straight_poses(5))
    assert np.allclose(a[0], 0)
    assert np.allclose(a[1:], [[0, 0.001, 0, 0, 0, 0]] * 4)


def test_untrained_image_model_shape_and_range(push100):
    w = image_windows(push100[:3], CFG, stride=8)
    model = ImageTfm(CFG, 32)
    out = model.rollout_frames(w.frames[:2, :10], w.actions[:2], 10)
    assert out.shape == (2, 10, 32, 32, 3)
    assert out.min() >= 0.0 and out.max() <= 1.0
    with pytest.raises(ValidationError):
        model.rollout_frames(w.frames[:2, :10, :16, :16], w.actions[:2], 10)


def test_autoregressive_consistency(push100):
    w = image_windows(push100[:2], CFG, stride=8)
    model = ImageTfm(CFG, 32, rng=np.random.default_rng(3))
    model.net.dec2.weight.data *= 50  # make predictions differ visibly from the inputs
    two = model.rollout_frames(w.frames[:1, :10], w.actions[:1], 2)
    fed = np.concatenate([w.frames[:1, :10], two[:, :1]], axis=1)
    one = model.rollout_frames(fed, w.actions[:1], 1)
    assert not np.allclose(two[0, 0], w.frames[0, 10])
    assert np.array_equal(one[0, 0], two[0, 1])


def test_sampling_schedule():
    probs = [sampling_probability(e, 9) for e in range(9)]
    assert probs[:3] == [0.0, 0.0, 0.0]
    assert probs[-1] == 1.0
    assert all(b >= a for a, b in zip(probs, probs[1:]))


def test_static_no_contact_learns_rest_frame(layout32):
    rest = rest_image(layout32).astype(np.float32)
    n = 12
    frames = np.broadcast_to(rest, (n, CFG.total) + rest.shape).copy()
    windows = FrameWindows(frames, np.zeros((n, CFG.total, 6)), np.arange(n) // 2)
    hp = ImageTfmHyperparams(epochs=3, batch_size=4)
    model = train_image_tfm(windows, CFG, hp, np.random.default_rng(0))
    assert horizon_mse(model, windows) < 1e-3


def test_image_training_improves_on_initialisation(push100, clm32):
    w = image_windows(push100[:20], CFG, stride=6, max_windows=24, rng=np.random.default_rng(0))
    untrained = ImageTfm(CFG, 32, rng=np.random.default_rng(0))
    untrained.ready = True
    hp = ImageTfmHyperparams(epochs=3, batch_size=4, lr=2e-3)
    model = train_image_tfm(w, CFG, hp, np.random.default_rng(0), clm32)
    assert len(model.curve.train) == 3 and np.all(np.isfinite(model.curve.train))
    assert horizon_mse(model, w) < 0.1 * horizon_mse(untrained, w)
    assert np.isfinite(persistence_mse(w, CFG))


def test_image_forecast_and_checkpoint(tmp_path, push100, clm32):
    w = image_windows(push100[:3], CFG, stride=8)
    model = ImageTfm(CFG, 32, clm=clm32)
    model.ready = True
    r = push100[0]
    k = int(np.flatnonzero(r.in_contact)[0]) + 10
    res = predict(model, list(r.frames_float()[k - 9:k + 1]), r.frame_poses[k - 9:k + 1],
                  r.frame_poses[k + 1:k + 11], context_s=np.full(10, 0.5))
    assert len(res) == 10 and res.frames_hat.shape == (10, 32, 32, 3)
    model.save(tmp_path / "i.npz", "h")
    back = ImageTfm.load(tmp_path / "i.npz", "h", clm32)
    a = back.rollout_frames(w.frames[:1, :10], w.actions[:1], 3)
    b = model.rollout_frames(w.frames[:1, :10], w.actions[:1], 3)
    assert np.array_equal(a, b)
