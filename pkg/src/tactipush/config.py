"""Single config tree: YAML file < TACTIPUSH_* env vars < command-line flags.

Environment overrides use ``TACTIPUSH_<SECTION>__<FIELD>`` (double underscore
between levels, case-insensitive), values parsed as YAML scalars.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from importlib import resources
from typing import Dict, Optional, Tuple, Union, get_args, get_origin, get_type_hints

import numpy as np
import yaml

from .bench.dataset import PushDatasetConfig
from .bench.experiment import ControllerSettings, ExperimentMatrix
from .bench.metrics import MetricsConfig
from .bench.scenario import ScenarioConfig
from .control.trajectory import ARC, LINEAR
from .core import Pose
from .errors import ConfigError, ValidationError
from .forecast.base import PredictorConfig
from .forecast.image_tfm import ImageTfmHyperparams
from .forecast.state_tfm import StateTfmHyperparams
from .simworld.models import FingerModel, StemModel, World
from .tactile.clm import ClmDatasetSpec, ClmHyperparams

ENV_PREFIX = "TACTIPUSH_"
# env vars under the prefix that are not config fields
RESERVED_ENV = {"TACTIPUSH_NO_NUMBA"}
# sections left out of the effective-config hash: they never change results
UNHASHED = ("paths", "bench.workers")


@dataclass(frozen=True)
class WorldConfig:
    physics_dt: float = 1e-3
    gravity: float = 9.81
    stem: StemModel = StemModel()
    finger: FingerModel = FingerModel()

    def build(self) -> World:
        return World(self.stem, self.finger, (), self.gravity, self.physics_dt)


@dataclass(frozen=True)
class TactileConfig:
    resolution: int = 64
    noise_std: float = 0.0  # pixel noise on rendered frames; 0 disables injection

    def __post_init__(self):
        if self.resolution not in (32, 64):
            raise ValidationError("resolution must be 32 or 64")


@dataclass(frozen=True)
class ClmConfig:
    dataset: ClmDatasetSpec = ClmDatasetSpec()
    train: ClmHyperparams = ClmHyperparams()


@dataclass(frozen=True)
class ForecastConfig:
    backend: str = "state"
    context: int = 10
    horizon: int = 10
    frame_hz: float = 60.0
    state: StateTfmHyperparams = StateTfmHyperparams()
    image: ImageTfmHyperparams = ImageTfmHyperparams()

    def __post_init__(self):
        if self.backend not in ("state", "image", "oracle"):
            raise ValidationError("backend must be one of image, state, oracle")

    @property
    def predictor(self):
        return PredictorConfig(self.context, self.horizon, self.frame_hz)


@dataclass(frozen=True)
class ControlConfig:
    controller: str = "dfpc"
    settings: ControllerSettings = ControllerSettings()

    def __post_init__(self):
        if self.controller not in ("openloop", "pd", "dfpc"):
            raise ValidationError("controller must be one of openloop, pd, dfpc")


@dataclass(frozen=True)
class RolloutConfig:
    zone: str = "Zone3"
    kind: str = LINEAR
    cluster: bool = False


@dataclass(frozen=True)
class MatrixConfig:
    controllers: Tuple[str, ...] = ("openloop", "pd", "dfpc")
    zones: Tuple[str, ...] = ("Zone1", "Zone2", "Zone3")
    kinds: Tuple[str, ...] = (LINEAR,)
    cluster: bool = False

    def build(self, name) -> ExperimentMatrix:
        return ExperimentMatrix(name, self.controllers, self.zones, self.kinds, self.cluster)


def _default_matrices():
    return {
        "table1": MatrixConfig(),
        "table2": MatrixConfig(kinds=(LINEAR, ARC)),
        "table3": MatrixConfig(kinds=(LINEAR, ARC), cluster=True),
    }


@dataclass(frozen=True)
class BenchSection:
    matrix: str = "table1"
    n_seeds: int = 5
    workers: int = 0  # 0 means all available cores
    formats: Tuple[str, ...] = ("csv", "json", "svg")
    matrices: Dict[str, MatrixConfig] = field(default_factory=_default_matrices)


@dataclass(frozen=True)
class PathsConfig:
    out: str = "out"
    clm_dataset: str = ""
    clm_model: str = ""
    push_dataset: str = ""
    tfm_model: str = ""
    input: str = ""


@dataclass(frozen=True)
class Config:
    seed: int = 0
    world: WorldConfig = WorldConfig()
    tactile: TactileConfig = TactileConfig()
    clm: ClmConfig = ClmConfig()
    dataset: PushDatasetConfig = PushDatasetConfig()
    forecast: ForecastConfig = ForecastConfig()
    control: ControlConfig = ControlConfig()
    scenario: ScenarioConfig = ScenarioConfig()
    metrics: MetricsConfig = MetricsConfig()
    rollout: RolloutConfig = RolloutConfig()
    bench: BenchSection = BenchSection()
    paths: PathsConfig = PathsConfig()


# conversion ---------------------------------------------------------------

# fields owned by another section: push frames always use tactile.resolution
_EXCLUDED = {(PushDatasetConfig, "resolution")}


def _fields(cls):
    return [f for f in fields(cls) if f.init and (cls, f.name) not in _EXCLUDED]


def to_tree(obj):
    """Plain nested dict/list/scalar representation of a config object."""
    if is_dataclass(obj):
        return {f.name: to_tree(getattr(obj, f.name)) for f in _fields(type(obj))}
    if isinstance(obj, Pose):
        return {"position": to_tree(obj.position), "orientation": to_tree(obj.orientation)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): to_tree(v) for k, v in obj.items()}
    if isinstance(obj, (tuple, list)):
        return [to_tree(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_tree(v) for v in obj.tolist()]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj



def _coerce(hint, value, path):
    origin = get_origin(hint)
    if origin is Union:
        args = [a for a in get_args(hint) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, path)
    if is_dataclass(hint):
        return from_tree(hint, value, path)
    if hint is Pose:
        if not isinstance(value, dict):
            raise ConfigError(path, "expected a mapping with position and orientation")
        extra = set(value) - {"position", "orientation"}
        if extra:
            raise ConfigError(f"{path}.{sorted(extra)[0]}", "unknown key")
        return Pose(np.asarray(value.get("position", [0, 0, 0]), float),
                    np.asarray(value.get("orientation", [0, 0, 0]), float))
    if hint is bool:
        if not isinstance(value, bool):
            raise ConfigError(path, f"expected a boolean, got {value!r}")
        return value
    if hint is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(path, f"expected an integer, got {value!r}")
        return value
    if hint is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(path, f"expected a number, got {value!r}")
        return float(value)
    if hint is str:
        if not isinstance(value, str):
            raise ConfigError(path, f"expected a string, got {value!r}")
        return value
    if hint is tuple or origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(path, f"expected a list, got {value!r}")
        args = get_args(hint)
        if not args:
            return tuple(value)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value))
        if len(args) != len(value):
            raise ConfigError(path, f"expected {len(args)} items, got {len(value)}")
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(args, value)))
    if origin is dict:
        if not isinstance(value, dict):
            raise ConfigError(path, f"expected a mapping, got {value!r}")
        _, vt = get_args(hint)
        return {str(k): _coerce(vt, v, f"{path}.{k}") for k, v in value.items()}
    return value


def from_tree(cls, tree, path=""):
    """Build dataclass ``cls`` from a mapping; missing keys take defaults, unknown keys fail."""
    if not isinstance(tree, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(tree).__name__}")
    hints = get_type_hints(cls)
    names = {f.name for f in _fields(cls)}
    for key in tree:
        if key not in names:
            raise ConfigError(f"{path}.{key}" if path else str(key), "unknown key")
    kwargs = {}
    for key, value in tree.items():
        sub = f"{path}.{key}" if path else key
        kwargs[key] = _coerce(hints[key], value, sub)
    try:
        return cls(**kwargs)
    except ValidationError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path or "<root>", str(exc)) from exc
    except TypeError as exc:
        raise ConfigError(path or "<root>", str(exc)) from exc


def _set_path(tree, dotted, value):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        nxt = node.get(k)
        if not isinstance(nxt, dict):
            nxt = {}
            node[k] = nxt
        node = nxt
    node[keys[-1]] = value


def _merge(base, over):
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(base.get(k), dict):
            _merge(base[k], v)
        else:
            base[k] = v
    return base


def env_overrides(environ=None):
    """(dotted path, value) pairs from TACTIPUSH_* variables."""
    environ = os.environ if environ is None else environ
    out = []
    for name in sorted(environ):
        if not name.startswith(ENV_PREFIX) or name in RESERVED_ENV:
            continue
        dotted = name[len(ENV_PREFIX):].lower().replace("__", ".")
        try:
            value = yaml.safe_load(environ[name])
        except yaml.YAMLError as exc:
            raise ConfigError(dotted, f"unparseable value in {name}") from exc
        out.append((dotted, value))
    return out


def read_file(path):
    try:
        with open(path) as fh:
            tree = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError("config", f"malformed YAML in {path}: {exc}") from exc
    if tree is None:
        return {}
    if not isinstance(tree, dict):
        raise ConfigError("<root>", "config file must hold a mapping")
    return tree


def load_config(path: Optional[str] = None, overrides=(), environ=None) -> Config:
    """Defaults, then the file, then environment, then explicit ``overrides``."""
    tree = to_tree(Config())
    if path:
        _merge(tree, read_file(path))
    for dotted, value in list(env_overrides(environ)) + list(overrides):
        _set_path(tree, dotted, value)
    return from_tree(Config, tree)


def default_config_text():
    return resources.files("tactipush").joinpath("default_config.yaml").read_text()


def default_config_path():
    return str(resources.files("tactipush").joinpath("default_config.yaml"))


def dump_yaml(cfg: Config) -> str:
    return yaml.safe_dump(to_tree(cfg), sort_keys=False, default_flow_style=None)


def _drop(tree, dotted):
    keys = dotted.split(".")
    node = tree
    for k in keys[:-1]:
        node = node.get(k, {})
    node.pop(keys[-1], None)


def config_hash(cfg: Config, sections=None) -> str:
    """sha256 over the canonical JSON of the config (optionally only some sections)."""
    tree = to_tree(cfg)
    for dotted in UNHASHED:
        _drop(tree, dotted)
    if sections is not None:
        tree = {k: tree[k] for k in sections}
    text = json.dumps(tree, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


# checkpoint hashes cover only what shapes the model
CLM_SECTIONS = ("world", "tactile", "clm")
TFM_SECTIONS = ("world", "tactile", "forecast", "dataset")


def replace(cfg, **changes):
    return dataclasses.replace(cfg, **changes)
