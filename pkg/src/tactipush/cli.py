"""Command-line entry point: ``tactipush <command> [flags]``.

Exit status: 0 success, 1 validation/config error, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import config as C
from .bench.dataset import generate_push_dataset, load_push_dataset, save_push_dataset
from .bench.experiment import BenchConfig, Models, build_controller, run_experiment
from .bench.metrics import compute_metrics
from .bench.report import emit_report, trace_svg, traces_from_json, write_trace_svgs
from .bench.scenario import build_trial
from .core import Rng
from .errors import ConfigError, MetricsUndefinedError, TactipushError, ValidationError
from .forecast import train_tfm
from .forecast.base import PhysicsOracle
from .forecast.image_tfm import ImageTfm
from .forecast.state_tfm import StateTfm
from .logs import RolloutLog, dump_json
from .simworld.rollout import rollout
from .tactile.clm import ClmModel, generate_clm_dataset, load_clm_dataset, save_clm_dataset, train_clm
from .tactile.render import MarkerLayout

COMMANDS = ("gen-clm-data", "train-clm", "gen-push-data", "train-tfm", "rollout", "bench", "plot",
            "validate-config")

# flag -> config path; --dataset depends on the command
FLAG_PATHS = {
    "out": "paths.out",
    "seed": "seed",
    "workers": "bench.workers",
    "matrix": "bench.matrix",
    "seeds": "bench.n_seeds",
    "backend": "forecast.backend",
    "controller": "control.controller",
    "resolution": "tactile.resolution",
    "clm_model": "paths.clm_model",
    "tfm_model": "paths.tfm_model",
    "input": "paths.input",
    "zone": "rollout.zone",
    "kind": "rollout.kind",
}
DATASET_PATH = {"train-clm": "paths.clm_dataset", "train-tfm": "paths.push_dataset"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="YAML config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="parallel workers (0 = all cores)")
    common.add_argument("--matrix", help="named experiment matrix, e.g. table1")
    common.add_argument("--seeds", type=int, help="seeds per experiment cell")
    common.add_argument("--backend", choices=("image", "state", "oracle"))
    common.add_argument("--controller", choices=("openloop", "pd", "dfpc"))
    common.add_argument("--resolution", type=int, choices=(32, 64))
    common.add_argument("--dataset", help="input dataset directory")
    common.add_argument("--clm-model", dest="clm_model")
    common.add_argument("--tfm-model", dest="tfm_model")
    common.add_argument("--input", help="rollout log directory or report JSON to plot")
    common.add_argument("--zone", choices=("Zone1", "Zone2", "Zone3"))
    common.add_argument("--kind", choices=("linear_bang_bang", "arc"))
    parser = _Parser(prog="tactipush", description="Tactile stem-pushing simulator and controllers")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def effective_config(args, environ=None):
    overrides = [(path, getattr(args, flag)) for flag, path in FLAG_PATHS.items()
                 if getattr(args, flag, None) is not None]
    if args.dataset is not None:
        if args.command not in DATASET_PATH:
            raise ConfigError("dataset", f"--dataset is not used by {args.command}")
        overrides.append((DATASET_PATH[args.command], args.dataset))
    return C.load_config(args.config, overrides, environ)


def _require(value, field):
    if not value:
        raise ConfigError(field, "required but not set")
    return value


def _existing(path, field):
    _require(path, field)
    if not Path(path).exists():
        raise ConfigError(field, f"no such file or directory: {path}")
    return path


def _layout(cfg):
    return MarkerLayout(resolution=cfg.tactile.resolution)


def _load_clm(cfg):
    path = _existing(cfg.paths.clm_model, "paths.clm_model")
    model = ClmModel.load(path, C.config_hash(cfg, C.CLM_SECTIONS))
    if model.resolution != cfg.tactile.resolution:
        raise ConfigError("tactile.resolution", f"CLM was trained at {model.resolution} px")
    return model


def _load_models(cfg, controllers):
    settings = cfg.control.settings
    needs_clm = settings.measurement == "clm" and any(c != "openloop" for c in controllers)
    needs_clm = needs_clm or ("dfpc" in controllers and cfg.forecast.backend == "image")
    clm = _load_clm(cfg) if needs_clm else None
    predictor = None
    if "dfpc" in controllers:
        backend = cfg.forecast.backend
        if backend == "oracle":
            predictor = PhysicsOracle(cfg.forecast.predictor)
        else:
            path = _existing(cfg.paths.tfm_model, "paths.tfm_model")
            digest = C.config_hash(cfg, C.TFM_SECTIONS)
            predictor = StateTfm.load(path, digest) if backend == "state" else ImageTfm.load(path, digest, clm)
    return Models(clm, predictor)


def _bench_config(cfg):
    return BenchConfig(cfg.scenario, cfg.metrics, cfg.control.settings, cfg.tactile.resolution,
                       cfg.tactile.noise_std, cfg.forecast.horizon)


# commands ------------------------------------------------------------------

def cmd_gen_clm_data(cfg, out):
    samples = generate_clm_dataset(cfg.clm.dataset, cfg.world.build(), Rng(cfg.seed, ("clm-data",)),
                                   layout=_layout(cfg), noise_std=cfg.tactile.noise_std)
    save_clm_dataset(samples, out / "clm_data", cfg.seed)
    return f"wrote {len(samples)} CLM samples to {out / 'clm_data'}"


def cmd_train_clm(cfg, out):
    samples = load_clm_dataset(_existing(cfg.paths.clm_dataset, "paths.clm_dataset"))
    model = train_clm(samples, cfg.clm.train, Rng(cfg.seed, ("train-clm",)))
    model.save(out / "clm.npz", C.config_hash(cfg, C.CLM_SECTIONS))
    (out / "clm_curve.json").write_text(dump_json(model.curve.as_dict()) + "\n")
    return f"trained CLM on {len(samples)} samples, validation MAE {model.validation_mae:.4f}"


def cmd_gen_push_data(cfg, out):
    dcfg = C.replace(cfg.dataset, resolution=cfg.tactile.resolution, noise_std=cfg.dataset.noise_std)
    rollouts = generate_push_dataset(dcfg.n_tasks, dcfg.linear_fraction, cfg.world.build(),
                                     Rng(cfg.seed, ("push-data",)), cfg=dcfg, scenario=cfg.scenario)
    save_push_dataset(rollouts, out / "push_data")
    return f"wrote {len(rollouts)} push rollouts to {out / 'push_data'}"


def cmd_train_tfm(cfg, out):
    backend = cfg.forecast.backend
    if backend == "oracle":
        raise ConfigError("forecast.backend", "the physics oracle has no parameters to train")
    dataset = load_push_dataset(_existing(cfg.paths.push_dataset, "paths.push_dataset"))
    needs_clm = backend == "image" or cfg.control.settings.measurement == "clm"
    clm = _load_clm(cfg) if needs_clm else None
    hp = cfg.forecast.state if backend == "state" else cfg.forecast.image
    model = train_tfm(backend, dataset, hp, Rng(cfg.seed, ("train-tfm", backend)), config=cfg.forecast.predictor,
                      clm=clm)
    path = out / f"tfm_{backend}.npz"
    model.save(path, C.config_hash(cfg, C.TFM_SECTIONS))
    (out / f"tfm_{backend}_curve.json").write_text(dump_json(model.curve.as_dict()) + "\n")
    val = model.curve.validation[-1] if model.curve.validation else float("nan")
    return f"trained {backend} forecaster on {len(dataset)} rollouts, final validation {val:.3g}, saved {path}"


def cmd_rollout(cfg, out):
    r = cfg.rollout
    name = cfg.control.controller
    models = _load_models(cfg, (name,))
    trial = build_trial(r.zone, r.kind, cfg.seed, cluster=r.cluster, cfg=cfg.scenario, world=cfg.world.build())
    ctrl = build_controller(name, trial.spec, models, cfg.control.settings, cfg.forecast.horizon)
    log = rollout(trial.initial, ctrl, trial.duration, world=trial.world, rng=Rng(cfg.seed, ("rollout",)),
                  layout=_layout(cfg), noise_std=cfg.tactile.noise_std,
                  meta={"controller": name, "zone": r.zone, "kind": r.kind, "seed": cfg.seed})
    log.write(out / "rollout")
    try:
        m = compute_metrics(log, cfg.metrics)
        detail = f"max disp {m.stem_max_disp:.3f}, slips {m.slip_instances}"
    except MetricsUndefinedError:
        detail = "no contact"
    return f"{name} rollout in {r.zone} ({r.kind}): {detail}; log in {out / 'rollout'}"


def cmd_bench(cfg, out):
    b = cfg.bench
    if b.matrix not in b.matrices:
        raise ConfigError("bench.matrix", f"unknown matrix {b.matrix!r}; have {sorted(b.matrices)}")
    matrix = b.matrices[b.matrix].build(b.matrix)
    models = _load_models(cfg, matrix.controllers)
    workers = b.workers or os.cpu_count() or 1
    report = run_experiment(matrix, b.n_seeds, cfg.world.build(), _bench_config(cfg), models,
                            seed=cfg.seed, workers=workers)
    files = emit_report(report, b.formats, out)
    failed = sum(c.failed for c in report.cells.values())
    return f"{b.matrix}: {len(report.cells)} cells, {report.n_trials()} trials, {failed} failed; {len(files)} files"


def cmd_plot(cfg, out):
    src = Path(_existing(cfg.paths.input, "paths.input"))
    if src.is_dir():
        log = RolloutLog.read(src)
        trace = {k: [r.get(k) for r in log.records] for k in ("t", "u_true", "a_res")}
        name = log.meta.get("controller", "rollout")
        path = out / "rollout.svg"
        path.write_text(trace_svg({name: trace}, f"{name} rollout"))
        return f"wrote {path}"
    tree = json.loads(src.read_text())
    files = write_trace_svgs(traces_from_json(tree), out, tree.get("matrix", "report"))
    return f"wrote {len(files)} plots"


def cmd_validate_config(cfg, out):
    return "config ok"


HANDLERS = {
    "gen-clm-data": cmd_gen_clm_data,
    "train-clm": cmd_train_clm,
    "gen-push-data": cmd_gen_push_data,
    "train-tfm": cmd_train_tfm,
    "rollout": cmd_rollout,
    "bench": cmd_bench,
    "plot": cmd_plot,
    "validate-config": cmd_validate_config,
}


def main(argv=None, environ=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
        cfg = effective_config(args, environ)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    digest = C.config_hash(cfg)
    try:
        out = Path(cfg.paths.out)
        if args.command != "validate-config":
            out.mkdir(parents=True, exist_ok=True)
        summary = HANDLERS[args.command](cfg, out)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print(f"config_hash={digest}")
        return 1
    except (TactipushError, OSError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        print(f"config_hash={digest}")
        return 2
    print(f"{args.command}: {summary}")
    print(f"config_hash={digest}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
