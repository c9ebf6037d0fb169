"""Seeded, paired experiment matrices over zones, trajectories and controllers."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..control.controllers import DFPC, PD, OpenLoop, Sensor
from ..control.law import GainSchedule
from ..control.trajectory import ARC, LINEAR
from ..core import Rng
from ..errors import MetricsUndefinedError, ValidationError
from ..forecast.base import Predictor
from ..simworld.models import World
from ..simworld.rollout import rollout
from ..tactile.render import MarkerLayout
from .metrics import METRIC_NAMES, MetricsConfig, TrialMetrics, compute_metrics
from .scenario import ScenarioConfig, Zone, build_trial

CONTROLLERS = ("openloop", "pd", "dfpc")


@dataclass(frozen=True)
class ControllerSettings:
    pd_kp: float = 8.0
    pd_kd: float = 0.2
    dfpc_kp: float = 15.0
    dfpc_kd: float = 0.01
    residual_limit: float = 0.5
    measurement: str = "clm"
    timing: str = "model"


@dataclass
class Models:
    clm: object = None
    predictor: Optional[Predictor] = None


@dataclass(frozen=True)
class ExperimentMatrix:
    name: str = "custom"
    controllers: Tuple[str, ...] = CONTROLLERS
    zones: Tuple[str, ...] = ("Zone1", "Zone2", "Zone3")
    kinds: Tuple[str, ...] = (LINEAR,)
    cluster: bool = False
    # per (controller, zone) ScenarioConfig field overrides, e.g. to force a failing cell
    overrides: Tuple = ()

    def __post_init__(self):
        for c in self.controllers:
            if c not in CONTROLLERS:
                raise ValidationError(f"unknown controller {c!r}")
        for z in self.zones:
            Zone(z)
        for k in self.kinds:
            if k not in (LINEAR, ARC):
                raise ValidationError(f"unknown trajectory kind {k!r}")

    def override_for(self, controller, zone):
        for (c, z), fields in self.overrides:
            if c == controller and z == zone:
                return dict(fields)
        return {}


MATRICES = {
    "table1": ExperimentMatrix("table1"),
    "table2": ExperimentMatrix("table2", kinds=(LINEAR, ARC)),
    "table3": ExperimentMatrix("table3", kinds=(LINEAR, ARC), cluster=True),
}


def scenario_label(kind, cluster):
    return f"{'cluster' if cluster else 'single'}-{'linear' if kind == LINEAR else 'arc'}"


@dataclass(frozen=True)
class BenchConfig:
    scenario: ScenarioConfig = ScenarioConfig()
    metrics: MetricsConfig = MetricsConfig()
    controller: ControllerSettings = ControllerSettings()
    resolution: int = 64
    noise_std: float = 0.0
    horizon: int = 10


def build_controller(name, spec, models: Models, settings: ControllerSettings, horizon=10):
    if name == "openloop":
        # open loop never reads its measurement; fall back to truth when no CLM exists
        mode = settings.measurement if (models.clm is not None or settings.measurement != "clm") else "truth"
        return OpenLoop(spec, Sensor(mode, models.clm), settings.residual_limit, settings.timing)
    sensor = Sensor(settings.measurement, models.clm)
    if name == "pd":
        return PD(spec, sensor, settings.pd_kp, settings.pd_kd, settings.residual_limit, settings.timing)
    if name == "dfpc":
        if models.predictor is None:
            raise ValidationError("d-FPC needs a forecaster")
        gains = GainSchedule.uniform(models.predictor.config.horizon, settings.dfpc_kp, settings.dfpc_kd)
        return DFPC(spec, models.predictor, gains, sensor, settings.residual_limit, settings.timing)
    raise ValidationError(f"unknown controller {name!r}")


@dataclass
class Cell:
    controller: str
    scenario: str
    zone: str
    trials: Dict[int, TrialMetrics] = field(default_factory=dict)
    failed: bool = False
    reason: str = ""

    @property
    def key(self):
        return (self.controller, self.scenario, self.zone)

    def values(self, metric):
        return np.array([getattr(self.trials[s], metric) for s in sorted(self.trials)], dtype=float)

    def mean(self, metric):
        v = self.values(metric)
        return float(v.mean()) if len(v) else float("nan")

    def std(self, metric):
        v = self.values(metric)
        return float(v.std(ddof=1)) if len(v) >= 2 else float("nan")


@dataclass
class ExperimentReport:
    matrix: str
    seeds: List[int]
    gamma: float
    cells: Dict[tuple, Cell]
    traces: Dict[tuple, dict] = field(default_factory=dict)

    @property
    def n(self):
        return len(self.seeds)

    def cell(self, controller, scenario, zone):
        return self.cells[(controller, scenario, zone)]

    def sorted_cells(self):
        return [self.cells[k] for k in sorted(self.cells)]

    def n_trials(self):
        return sum(len(c.trials) for c in self.cells.values())

    def mean_over(self, controller, metric, scenario=None, zones=None):
        vals = [c.mean(metric) for c in self.cells.values()
                if c.controller == controller and not c.failed
                and (scenario is None or c.scenario == scenario) and (zones is None or c.zone in zones)]
        return float(np.mean(vals)) if vals else float("nan")


def _run_one(task):
    (controller, kind, zone, seed, cluster, cfg, models, world, overrides) = task
    scen = replace(cfg.scenario, **overrides) if overrides else cfg.scenario
    trial = build_trial(zone, kind, seed, cluster=cluster, cfg=scen, world=world)
    ctrl = build_controller(controller, trial.spec, models, cfg.controller, cfg.horizon)
    layout = MarkerLayout(resolution=cfg.resolution)
    rng = Rng(seed, ("noise", zone, kind, str(cluster)))
    log = rollout(trial.initial, ctrl, trial.duration, world=trial.world, rng=rng, layout=layout,
                  noise_std=cfg.noise_std)
    try:
        metrics = compute_metrics(log, cfg.metrics)
    except MetricsUndefinedError as exc:
        return None, str(exc), None
    trace = {key: [r.get(key) for r in log.records] for key in ("t", "u_true", "a_res")}
    return metrics, "", trace


def run_experiment(matrix: ExperimentMatrix, n_seeds: int = 5, world: World = World(),
                   cfg: BenchConfig = BenchConfig(), models: Models = Models(), *, seed: int = 0,
                   workers: int = 1) -> ExperimentReport:
    """Run every (controller, trajectory, zone) cell for ``n_seeds`` paired seeds.

    Within one (trajectory, zone, seed) all controllers face the identical
    world and start pose. Cells whose trials never make contact are marked
    failed and the run continues.
    """
    if n_seeds < 1:
        raise ValidationError("n_seeds must be at least 1")
    seeds = [seed + i for i in range(n_seeds)]
    tasks = []
    keys = []
    for controller in matrix.controllers:
        for kind in matrix.kinds:
            for zone in matrix.zones:
                for s in seeds:
                    tasks.append((controller, kind, zone, s, matrix.cluster, cfg, models, world,
                                  matrix.override_for(controller, zone)))
                    keys.append((controller, scenario_label(kind, matrix.cluster), zone, s))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    cells = {}
    traces = {}
    for (controller, scenario, zone, s), (metrics, reason, trace) in zip(keys, results):
        cell = cells.setdefault((controller, scenario, zone), Cell(controller, scenario, zone))
        if metrics is None:
            cell.failed = True
            cell.reason = cell.reason or reason
            continue
        cell.trials[s] = metrics
        if s == seeds[0]:
            traces[(controller, scenario, zone)] = trace
    for cell in cells.values():
        if cell.failed:
            cell.trials.clear()
    return ExperimentReport(matrix.name, seeds, cfg.metrics.gamma, cells, traces)


def default_workers():
    return max(1, os.cpu_count() or 1)
