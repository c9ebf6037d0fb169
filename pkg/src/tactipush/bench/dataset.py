"""Push dataset for training the forecasters.

Every task follows a randomized reference trajectory. A share of the tasks
also carries a seeded random rotation about the contact line once contact
is made, so the forecasters see the wrist motions a residual controller
produces.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from ..control.controllers import Controller, OpenLoop, Sensor, _Scalar
from ..control.trajectory import ARC, LINEAR, TrajectorySpec
from ..core import Action, Pose, Rng, TactileFrame, synchronize
from ..errors import ValidationError
from ..logs import dump_json, write_npz
from ..simworld import kernels as K
from ..simworld.models import World
from ..simworld.rollout import rollout
from ..tactile.render import MarkerLayout
from .scenario import ScenarioConfig, jitter_stem, make_trial

DEFAULT_TASKS = 200
FULL_TASKS = 430


@dataclass(frozen=True)
class PushDatasetConfig:
    n_tasks: int = DEFAULT_TASKS
    linear_fraction: float = 0.5
    resolution: int = 32
    u_range: tuple = (0.1, 0.85)
    yaw_range_deg: tuple = (-42.0, -26.0)
    speed_range: tuple = (0.04, 0.08)
    distance_range: tuple = (0.06, 0.12)
    orientation_jitter: float = 0.25  # rad, per Euler component of qf - q0
    noise_std: float = 0.0
    explore_fraction: float = 0.5  # share of tasks with random contact-line rotations
    explore_rate: float = 0.5  # rad/s bound of the random rotation
    explore_hold: int = 8  # max frames a random rotation value is held

    def __post_init__(self):
        if not 0.0 <= self.explore_fraction <= 1.0:
            raise ValidationError("explore_fraction must lie in [0, 1]")
        if self.explore_rate < 0 or self.explore_hold < 1:
            raise ValidationError("explore_rate must be >= 0 and explore_hold >= 1")


@dataclass
class PushRollout:
    """One stored task: 60 Hz frames paired with 1 kHz EE poses."""

    spec: TrajectorySpec
    seed: int
    u0: float
    frames: np.ndarray  # uint8 (n, H, W, 3)
    frame_times: np.ndarray
    frame_poses: np.ndarray  # (n, 4, 4) EE pose of the synced action
    u_true: np.ndarray  # NaN when out of contact
    tick_poses: np.ndarray  # (n_ticks + 1, 7): t, position, rotvec
    sync_index: np.ndarray  # action index per frame
    sync_skew: np.ndarray

    @property
    def in_contact(self):
        return ~np.isnan(self.u_true)

    def frames_float(self):
        return self.frames.astype(float) / 255.0


def _tick_poses(log, initial_pose: Pose):
    n = log.n_ticks
    out = np.zeros((n + 1, 7))
    out[0, 1:4] = initial_pose.position
    from scipy.spatial.transform import Rotation
    out[0, 4:] = Rotation.from_matrix(initial_pose.rotation).as_rotvec()
    out[1:, 0] = log.ticks[:, K.R_T]
    out[1:, 1:4] = log.ee_positions
    out[1:, 4:] = Rotation.from_matrix(log.ee_rotations).as_rotvec()
    return out


def _pose_matrices(rows):
    from scipy.spatial.transform import Rotation
    T = np.tile(np.eye(4), (len(rows), 1, 1))
    T[:, :3, :3] = Rotation.from_rotvec(rows[:, 4:]).as_matrix()
    T[:, :3, 3] = rows[:, 1:4]
    return T


def sample_task(rng, cfg: PushDatasetConfig, base: ScenarioConfig, world: World):
    kind = LINEAR if rng.uniform() < cfg.linear_fraction else ARC
    sc = replace(base, v_max=float(rng.uniform(*cfg.speed_range)),
                 push_distance=float(rng.uniform(*cfg.distance_range)))
    w = replace(world, stem=jitter_stem(world.stem, rng, base.stiffness_jitter))
    u0 = float(rng.uniform(*cfg.u_range))
    yaw = math.radians(float(rng.uniform(*cfg.yaw_range_deg)))
    dq = rng.uniform(-1, 1, size=3) * cfg.orientation_jitter
    return make_trial(w, u0, yaw, kind, sc, dq=dq)


class Explorer(Controller):
    """Reference twist plus a piecewise-constant random rotation about the contact line."""

    name = "explore"

    def __init__(self, spec, rng, rate=0.5, hold=8):
        super().__init__(spec, Sensor("truth"))
        self.rng = rng
        self.rate = float(rate)
        self.hold = int(hold)

    def reset(self, world, state, period):
        super().reset(world, state, period)
        self.left = 0
        self.value = 0.0

    def tick(self, obs):
        a_ref = self.reference(obs)
        s = self.sensor.measure(obs)
        if s is None:
            return self._finish(obs, a_ref, None, None)
        self._track_contact(obs, s)
        if self.left == 0:
            self.value = float(self.rng.uniform(-self.rate, self.rate))
            self.left = int(self.rng.integers(1, self.hold + 1))
        self.left -= 1
        return self._finish(obs, a_ref, _Scalar(self.value, False), s)


def record_task(trial, seed, cfg: PushDatasetConfig, rng=None, explore_rng=None) -> PushRollout:
    """Roll out one task; ``explore_rng`` switches on the random contact-line rotation."""
    layout = MarkerLayout(resolution=cfg.resolution)
    if explore_rng is None:
        ctrl = OpenLoop(trial.spec)
    else:
        ctrl = Explorer(trial.spec, explore_rng, cfg.explore_rate, cfg.explore_hold)
    log = rollout(trial.initial, ctrl, trial.duration, world=trial.world, rng=rng,
                  layout=layout, noise_std=cfg.noise_std, keep_frames=True)
    ticks = _tick_poses(log, trial.initial.ee_pose)
    frames = [TactileFrame(np.clip(f.astype(float), 0, 1), float(r["t"])) for f, r in zip(log.frames, log.records)]
    # Action objects only carry time here; pose matrices come from the tick table.
    index = {}
    actions = []
    for i, t in enumerate(ticks[:, 0]):
        a = Action(_ZERO_POSE, float(t))
        index[id(a)] = i
        actions.append(a)
    synced = synchronize(frames, actions)
    if synced.dropped:
        raise ValidationError(f"{synced.dropped} frames could not be paired with robot state")
    sync_index = np.array([index[id(s.action)] for s in synced], dtype=np.int64)
    skew = np.array([s.skew for s in synced])
    return PushRollout(trial.spec, seed, trial.u0, np.round(log.frames * 255.0).astype(np.uint8),
                       log.control_times, _pose_matrices(ticks[sync_index]), log.s_true, ticks, sync_index, skew)


_ZERO_POSE = Pose(np.zeros(3), np.zeros(3))


def generate_push_dataset(n_tasks: Optional[int] = None, mix: float = 0.5, world: World = World(), rng=None, *,
                          cfg: PushDatasetConfig = PushDatasetConfig(), scenario: ScenarioConfig = ScenarioConfig(),
                          full: bool = False) -> List[PushRollout]:
    """Randomized push tasks; ``mix`` is the fraction of linear pushes."""
    n = n_tasks if n_tasks is not None else (FULL_TASKS if full else cfg.n_tasks)
    if n < 1:
        raise ValidationError("n_tasks must be at least 1")
    if not 0.0 <= mix <= 1.0:
        raise ValidationError("mix must lie in [0, 1]")
    cfg = replace(cfg, linear_fraction=mix)
    rng = rng if rng is not None else Rng(0)
    out = []
    for i in range(n):
        task_rng = rng.spawn("task", i)
        trial = sample_task(task_rng, cfg, scenario, world)
        ex = task_rng.spawn("explore")
        explore = ex if ex.uniform() < cfg.explore_fraction else None
        out.append(record_task(trial, i, cfg, task_rng.spawn("noise"), explore))
    return out


def save_push_dataset(rollouts, directory):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    index = []
    for i, r in enumerate(rollouts):
        name = f"task_{i:04d}.npz"
        write_npz(directory / name, {
            "frames": r.frames, "frame_times": r.frame_times, "frame_poses": r.frame_poses, "u_true": r.u_true,
            "tick_poses": r.tick_poses, "sync_index": r.sync_index, "sync_skew": r.sync_skew})
        index.append({"file": name, "seed": r.seed, "u0": r.u0, "spec": r.spec.to_dict()})
    (directory / "index.json").write_text(dump_json(index) + "\n")


def load_push_dataset(directory) -> List[PushRollout]:
    directory = Path(directory)
    path = directory / "index.json"
    if not path.exists():
        raise ValidationError(f"dataset_path: no index.json in {directory}")
    out = []
    for row in json.loads(path.read_text()):
        with np.load(directory / row["file"], allow_pickle=False) as z:
            out.append(PushRollout(TrajectorySpec.from_dict(row["spec"]), row["seed"], row["u0"], z["frames"],
                                   z["frame_times"], z["frame_poses"], z["u_true"], z["tick_poses"],
                                   z["sync_index"], z["sync_skew"]))
    return out


def directory_hash(directory):
    h = hashlib.sha256()
    for p in sorted(Path(directory).rglob("*")):
        if p.is_file():
            h.update(p.relative_to(directory).as_posix().encode())
            h.update(p.read_bytes())
    return h.hexdigest()
