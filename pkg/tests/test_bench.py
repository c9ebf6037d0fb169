import json
import math

import numpy as np
import pytest

from tactipush.bench import dataset as ds
from tactipush.bench.experiment import (MATRICES, BenchConfig, ControllerSettings, ExperimentMatrix, Models,
                                        build_controller, run_experiment)
from tactipush.bench.metrics import METRIC_NAMES, MetricsConfig, compute_metrics
from tactipush.bench.report import CSV_HEADER, emit_report, read_csv, report_tree
from tactipush.bench.scenario import ScenarioConfig, Zone, build_trial, sample_u0
from tactipush.control.trajectory import LINEAR
from tactipush.core import Rng
from tactipush.errors import MetricsUndefinedError, ValidationError
from tactipush.forecast import Persistence, PredictorConfig
from tactipush.simworld.rollout import rollout

TRUTH = ControllerSettings(measurement="truth")
MODELS = Models(None, Persistence(PredictorConfig()))
FAST = BenchConfig(controller=TRUTH, resolution=32)


# zones ---------------------------------------------------------------------

def test_zones_disjoint_and_inside_unit_interval():
    grid = np.linspace(0, 1, 100001)
    owners = np.array([[z.contains(u) for z in Zone] for u in grid])
    assert owners.sum(axis=1).max() == 1
    assert Zone.Zone1.contains(0.9) and not Zone.Zone1.contains(0.55)
    assert Zone.Zone2.contains(0.10) and not Zone.Zone2.contains(0.45)
    assert Zone.Zone3.contains(0.45) and Zone.Zone3.contains(0.55)
    assert not any(z.contains(0.05) or z.contains(0.95) for z in Zone)


def test_sampled_contacts_fall_in_their_zone():
    rng = np.random.default_rng(0)
    for z in Zone:
        assert all(z.contains(sample_u0(z, rng, ScenarioConfig())) for _ in range(200))


# metrics -------------------------------------------------------------------

def records(s, t=None, a=None, comp=None):
    n = len(s)
    t = np.arange(n) / 60 if t is None else t
    a = np.zeros(n) if a is None else a
    comp = np.zeros(n) if comp is None else comp
    return [{"in_contact": u is not None, "u_true": u, "t": float(ti), "a_res": float(ai), "comp_time_ms": float(ci)}
            for u, ti, ai, ci in zip(s, t, a, comp)]


def test_worked_max_displacement():
    m = compute_metrics(records([0.2, 0.5, 0.3]))
    assert m.stem_max_disp == pytest.approx(0.3, abs=1e-15)


def test_constant_trace_has_zero_displacement():
    m = compute_metrics(records([0.4] * 10))
    assert m.stem_max_disp == 0.0 and m.slip_instances == 0 and m.disp_integral == 0.0
    assert compute_metrics(records([0.4] * 9 + [0.40001])).stem_max_disp > 0


def test_infinite_threshold_counts_no_slips():
    rng = np.random.default_rng(1)
    s = list(rng.uniform(0, 1, 50))
    assert compute_metrics(records(s), MetricsConfig(gamma=math.inf)).slip_instances == 0


def test_metrics_need_two_contact_frames():
    with pytest.raises(MetricsUndefinedError):
        compute_metrics(records([None, None, 0.3, None]))
    with pytest.raises(ValidationError):
        MetricsConfig(gamma=0.0)


def brute_force(recs, gamma):
    s, ts = [], []
    for r in recs:
        if r["in_contact"]:
            s.append(r["u_true"])
            ts.append(r["t"])
    hi, lo = max(s), min(s)
    slips = 0
    for i in range(1, len(s)):
        if abs(s[i] - s[i - 1]) > gamma:
            slips += 1
    disp = 0.0
    for i in range(1, len(s)):
        disp += (ts[i] - ts[i - 1]) * (abs(s[i] - s[0]) + abs(s[i - 1] - s[0])) / 2
    act = 0.0
    for i in range(1, len(recs)):
        act += (recs[i]["t"] - recs[i - 1]["t"]) * (abs(recs[i]["a_res"]) + abs(recs[i - 1]["a_res"])) / 2
    comp = sum(r["comp_time_ms"] for r in recs) / len(recs)
    return abs(hi - lo), slips, disp, act, comp


def _random_log(rng):
    n = 100
    u = np.clip(0.5 + np.cumsum(rng.normal(0, 0.006, n)), 0, 1)
    mask = rng.uniform(size=n) < 0.15
    mask[:int(rng.integers(0, 10))] = True  # a pre-contact stretch
    s = [None if m else float(v) for m, v in zip(mask, u)]
    if sum(v is not None for v in s) < 2:
        s[-1], s[-2] = 0.5, 0.6
    t = np.cumsum(rng.uniform(0.015, 0.018, n))
    return records(s, t, rng.normal(0, 0.3, n), rng.uniform(0, 2, n))


def test_metrics_match_brute_force_on_random_logs():
    rng = np.random.default_rng(2)
    gamma = MetricsConfig().gamma
    for _ in range(100):
        recs = _random_log(rng)
        m = compute_metrics(recs)
        disp, slips, dint, aint, comp = brute_force(recs, gamma)
        assert m.slip_instances == slips
        assert m.stem_max_disp == pytest.approx(disp, rel=1e-9, abs=1e-15)
        assert m.disp_integral == pytest.approx(dint, rel=1e-9, abs=1e-15)
        assert m.action_integral == pytest.approx(aint, rel=1e-9, abs=1e-15)
        assert m.comp_time_ms == pytest.approx(comp, rel=1e-9)
        assert all(v >= 0 for v in m.as_dict().values())


def test_metrics_match_brute_force_on_simulated_trial():
    trial = build_trial("Zone1", seed=2)
    ctrl = build_controller("pd", trial.spec, MODELS, TRUTH)
    log = rollout(trial.initial, ctrl, trial.duration, world=trial.world)
    m = compute_metrics(log)
    disp, slips, dint, aint, comp = brute_force(log.records, MetricsConfig().gamma)
    assert m.slip_instances == slips and slips > 0
    assert m.stem_max_disp == pytest.approx(disp, rel=1e-9)
    assert m.disp_integral == pytest.approx(dint, rel=1e-9)
    assert m.action_integral == pytest.approx(aint, rel=1e-9)


# datasets ------------------------------------------------------------------

def test_all_linear_mix():
    out = ds.generate_push_dataset(3, mix=1.0, rng=Rng(5))
    assert [r.spec.kind for r in out] == [LINEAR] * 3
    r = out[0]
    assert r.frames.dtype == np.uint8 and len(r.frames) == len(r.frame_poses) == len(r.u_true)
    assert np.abs(r.sync_skew).max() <= 0.5e-3 + 1e-12
    with pytest.raises(ValidationError):
        ds.generate_push_dataset(0)
    with pytest.raises(ValidationError):
        ds.generate_push_dataset(1, mix=1.5)


def test_exploration_rotates_only_in_contact():
    trial = build_trial("Zone2", seed=0)
    ex = ds.Explorer(trial.spec, np.random.default_rng(0), rate=0.5, hold=4)
    log = rollout(trial.initial, ex, trial.duration, world=trial.world)
    a = np.array([r["a_res"] for r in log.records])
    touching = np.array([r["u_true"] is not None for r in log.records])
    first = int(np.argmax(touching))
    assert not a[:first].any()
    assert np.abs(a).max() <= 0.5 and len(set(a[touching])) > 5
    runs = np.diff(np.flatnonzero(np.diff(a[touching]) != 0))
    assert runs.max() <= 4


def test_exploration_share_and_switch():
    none = ds.generate_push_dataset(4, rng=Rng(3), cfg=ds.PushDatasetConfig(explore_fraction=0.0))
    some = ds.generate_push_dataset(4, rng=Rng(3), cfg=ds.PushDatasetConfig(explore_fraction=1.0))
    for a, b in zip(none, some):
        assert a.spec.to_dict() == b.spec.to_dict()
        assert not np.allclose(a.frame_poses[-1], b.frame_poses[-1])
    with pytest.raises(ValidationError):
        ds.PushDatasetConfig(explore_fraction=1.5)


def test_full_mode_task_count(monkeypatch):
    monkeypatch.setattr(ds, "sample_task", lambda rng, cfg, base, world: None)
    monkeypatch.setattr(ds, "record_task", lambda trial, seed, cfg, rng=None, explore_rng=None: seed)
    assert ds.generate_push_dataset(full=True) == list(range(430))
    assert len(ds.generate_push_dataset()) == ds.DEFAULT_TASKS


def test_dataset_directory_hash_is_reproducible(tmp_path):
    for name in ("a", "b"):
        ds.save_push_dataset(ds.generate_push_dataset(2, rng=Rng(11)), tmp_path / name)
    assert ds.directory_hash(tmp_path / "a") == ds.directory_hash(tmp_path / "b")
    ds.save_push_dataset(ds.generate_push_dataset(2, rng=Rng(12)), tmp_path / "c")
    assert ds.directory_hash(tmp_path / "a") != ds.directory_hash(tmp_path / "c")
    back = ds.load_push_dataset(tmp_path / "a")
    assert back[1].spec.to_dict() == ds.generate_push_dataset(2, rng=Rng(11))[1].spec.to_dict()


# experiments and reports ---------------------------------------------------

@pytest.fixture(scope="module")
def table1():
    return run_experiment(MATRICES["table1"], 5, cfg=FAST, models=MODELS)


def test_table1_shape(table1):
    assert len(table1.cells) == 9
    assert table1.n_trials() == 45
    assert table1.seeds == [0, 1, 2, 3, 4]
    for cell in table1.cells.values():
        assert not cell.failed and sorted(cell.trials) == table1.seeds
        assert all(cell.std(m) >= 0 for m in METRIC_NAMES)


def test_failed_cell_is_isolated():
    matrix = ExperimentMatrix("iso", controllers=("openloop", "pd"), zones=("Zone1", "Zone2"),
                              overrides=((("openloop", "Zone2"), (("push_distance", 0.002),)),))
    report = run_experiment(matrix, 2, cfg=FAST, models=MODELS)
    bad = report.cell("openloop", "single-linear", "Zone2")
    assert bad.failed and not bad.trials and "contact" in bad.reason
    others = [c for c in report.cells.values() if c is not bad]
    assert len(others) == 3 and all(not c.failed and len(c.trials) == 2 for c in others)
    tree = report_tree(report)
    assert [c["failed"] for c in tree["cells"]].count(True) == 1


def test_paired_seeds_share_pre_contact_prefix():
    for zone in Zone:
        logs = []
        for name in ("openloop", "pd", "dfpc"):
            trial = build_trial(zone, seed=3)
            logs.append(rollout(trial.initial, build_controller(name, trial.spec, MODELS, TRUTH), trial.duration,
                                world=trial.world))
        first = {log.first_contact_tick() for log in logs}
        assert len(first) == 1
        n = first.pop()
        assert all(np.array_equal(log.ticks[:n + 1], logs[0].ticks[:n + 1]) for log in logs)


def test_csv_rows_and_round_trip(table1, tmp_path):
    paths = emit_report(table1, {"csv", "json", "svg"}, tmp_path)
    main = (tmp_path / "table1.csv").read_text().splitlines()
    assert len(main) == 9 * 5 + 1
    assert tuple(main[0].split(",")) == CSV_HEADER
    trials = read_csv(tmp_path / "table1_trials.csv")
    assert len(trials) == 45 * 5
    for row in trials:
        m = table1.cell(row["controller"], row["scenario"], row["zone"]).trials[int(row["seed"])]
        assert float(row["value"]) == getattr(m, row["metric"])
    svgs = [p for p in paths if p.suffix == ".svg"]
    assert len(svgs) == 3 and all(p.read_text().startswith("<svg") for p in svgs)


def test_aggregation_recomputable_from_trial_rows(table1, tmp_path):
    emit_report(table1, {"csv", "json"}, tmp_path)
    groups = {}
    for row in read_csv(tmp_path / "table1_trials.csv"):
        groups.setdefault((row["controller"], row["scenario"], row["zone"], row["metric"]), []).append(
            float(row["value"]))
    summary = {(r["controller"], r["scenario"], r["zone"], r["metric"]): float(r["value"])
               for r in read_csv(tmp_path / "table1.csv")}
    tree = json.loads((tmp_path / "table1.json").read_text())
    stds = {(c["controller"], c["scenario"], c["zone"], m): v["std"]
            for c in tree["cells"] for m, v in c["metrics"].items()}
    for key, vals in groups.items():
        assert abs(np.mean(vals) - summary[key]) <= 1e-12 * max(1.0, abs(summary[key]))
        assert abs(np.std(vals, ddof=1) - stds[key]) <= 1e-12 * max(1.0, stds[key])


def test_empty_formats_write_nothing(table1, tmp_path):
    assert emit_report(table1, set(), tmp_path / "none") == []
    assert not (tmp_path / "none").exists()
    with pytest.raises(ValueError):
        emit_report(table1, {"pdf"}, tmp_path)


def test_unwritable_path_names_it(table1, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        emit_report(table1, {"csv"}, blocker / "out")


def test_matrix_validation():
    with pytest.raises(ValidationError):
        ExperimentMatrix(controllers=("mpc",))
    with pytest.raises(ValueError):
        ExperimentMatrix(zones=("Zone4",))
    with pytest.raises(ValidationError):
        run_experiment(MATRICES["table1"], 0)
