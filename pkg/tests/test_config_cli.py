import json
import subprocess
import sys

import pytest

from tactipush import cli
from tactipush import config as C
from tactipush.errors import ConfigError


def run(argv, environ=None):
    return cli.main(argv, environ={} if environ is None else environ)


# config tree ---------------------------------------------------------------

def test_shipped_default_matches_code_defaults():
    shipped = C.load_config(C.default_config_path(), environ={})
    assert C.to_tree(shipped) == C.to_tree(C.Config())
    assert C.config_hash(shipped) == C.config_hash(C.Config())


def test_yaml_round_trip(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(C.dump_yaml(C.Config()))
    assert C.to_tree(C.load_config(str(p), environ={})) == C.to_tree(C.Config())


def test_precedence_flags_over_env_over_file(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: 1\nmetrics:\n  gamma: 0.01\n")
    assert C.load_config(str(p), environ={}).seed == 1
    env = {"TACTIPUSH_SEED": "2", "TACTIPUSH_NO_NUMBA": "1"}
    assert C.load_config(str(p), environ=env).seed == 2
    cfg = C.load_config(str(p), [("seed", 3)], environ=env)
    assert cfg.seed == 3 and cfg.metrics.gamma == 0.01
    nested = C.load_config(None, environ={"TACTIPUSH_CONTROL__SETTINGS__PD_KP": "2.5"})
    assert nested.control.settings.pd_kp == 2.5


@pytest.mark.parametrize("text, field", [
    ("metrics:\n  gama: 0.1\n", "metrics.gama"),
    ("seed: many\n", "seed"),
    ("metrics:\n  gamma: -1\n", "gamma"),
    ("tactile: [1, 2]\n", "tactile"),
])
def test_bad_config_names_field(tmp_path, text, field):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError if field != "gamma" else ValueError, match=field):
        C.load_config(str(p), environ={})


def test_malformed_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("seed: [1,\n")
    with pytest.raises(ConfigError, match="malformed"):
        C.load_config(str(p), environ={})


def test_hash_tracks_results_not_plumbing():
    base = C.config_hash(C.Config())
    assert C.config_hash(C.load_config(None, [("seed", 1)], {})) != base
    assert C.config_hash(C.load_config(None, [("bench.workers", 4), ("paths.out", "/x")], {})) == base
    clm_hash = C.config_hash(C.Config(), C.CLM_SECTIONS)
    assert C.config_hash(C.load_config(None, [("metrics.gamma", 0.01)], {}), C.CLM_SECTIONS) == clm_hash
    assert C.config_hash(C.load_config(None, [("tactile.resolution", 32)], {}), C.CLM_SECTIONS) != clm_hash


# command line --------------------------------------------------------------

def test_validate_shipped_config(capsys):
    assert run(["validate-config", "--config", C.default_config_path()]) == 0
    out = capsys.readouterr().out
    assert f"config_hash={C.config_hash(C.Config())}" in out


def test_unknown_flag_and_command(capsys):
    assert run(["validate-config", "--bogus"]) == 1
    assert "--bogus" in capsys.readouterr().err
    assert run(["launch"]) == 1
    assert run(["bench", "--resolution", "48"]) == 1


def test_train_clm_without_dataset_names_field(tmp_path, capsys):
    assert run(["train-clm", "--out", str(tmp_path)]) == 1
    assert "paths.clm_dataset" in capsys.readouterr().err


def test_dataset_flag_only_where_used(tmp_path, capsys):
    assert run(["bench", "--dataset", str(tmp_path)]) == 1
    assert "dataset" in capsys.readouterr().err


def test_missing_model_file(tmp_path, capsys):
    code = run(["rollout", "--controller", "pd", "--out", str(tmp_path), "--clm-model", str(tmp_path / "no.npz")])
    assert code == 1
    assert "paths.clm_model" in capsys.readouterr().err


def test_unknown_matrix(tmp_path, capsys):
    assert run(["bench", "--matrix", "table9", "--out", str(tmp_path)]) == 1
    assert "bench.matrix" in capsys.readouterr().err


def test_checkpoint_from_other_config_rejected(tmp_path, clm32, capsys):
    cfg = C.load_config(None, [("tactile.resolution", 32)], {})
    path = tmp_path / "clm.npz"
    clm32.save(path, C.config_hash(cfg, C.CLM_SECTIONS))
    args = ["rollout", "--controller", "pd", "--resolution", "32", "--clm-model", str(path), "--out", str(tmp_path)]
    assert run(args) == 0
    assert run(args, {"TACTIPUSH_CLM__TRAIN__EPOCHS": "3"}) == 1
    assert "config" in capsys.readouterr().err.lower()


def test_rollout_and_plot(tmp_path, capsys):
    out = tmp_path / "r"
    env = {"TACTIPUSH_CONTROL__SETTINGS__MEASUREMENT": "truth"}
    assert run(["rollout", "--controller", "pd", "--zone", "Zone2", "--out", str(out)], env) == 0
    assert (out / "rollout").is_dir()
    assert run(["plot", "--input", str(out / "rollout"), "--out", str(tmp_path / "p")], env) == 0
    assert (tmp_path / "p" / "rollout.svg").read_text().startswith("<svg")
    assert run(["plot", "--out", str(tmp_path / "p")]) == 1


def test_outputs_only_under_out(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    env = {"TACTIPUSH_CONTROL__SETTINGS__MEASUREMENT": "truth"}
    assert run(["rollout", "--controller", "openloop", "--out", "o"], env) == 0
    assert sorted(p.name for p in tmp_path.iterdir()) == ["o"]


def test_console_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "tactipush.cli", "validate-config"], capture_output=True, text=True,
                         cwd=tmp_path)
    assert res.returncode == 0
    assert res.stdout.strip().splitlines()[-1].startswith("config_hash=")


def test_bench_smoke_with_oracle(tmp_path):
    env = {"TACTIPUSH_CONTROL__SETTINGS__MEASUREMENT": "truth", "TACTIPUSH_BENCH__MATRICES__TABLE1__ZONES": "[Zone3]"}
    code = run(["bench", "--matrix", "table1", "--seeds", "2", "--backend", "oracle", "--resolution", "32",
                "--workers", "1", "--out", str(tmp_path)], env)
    assert code == 0
    tree = json.loads((tmp_path / "table1.json").read_text())
    assert tree["n"] == 2 and len(tree["cells"]) == 3
    assert (tmp_path / "table1.csv").exists() and (tmp_path / "table1_trials.csv").exists()
