"""Tests for JSON run-config parsing and validation."""

import json

import pytest

from crcvol.config import RunConfig, default_config, load_config
from crcvol.errors import ConfigError


def _write(tmp_path, doc, name="run.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc) if not isinstance(doc, str) else doc,
                    encoding="utf-8")
    return str(path)


def test_default_config_values():
    cfg = default_config()
    assert cfg.train.epochs == 200
    assert cfg.train.batch_size == 1000
    assert cfg.sim.n_steps == 250
    assert cfg.damping.alpha == 0.75
    assert cfg.paths == {}


def test_missing_sections_fall_back_to_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, {}))
    base = default_config()
    assert cfg.train == base.train
    assert cfg.sim == base.sim
    assert cfg.damping == base.damping
    assert cfg.bounds == base.bounds


def test_full_round_trip(tmp_path):
    doc = {
        "bounds": {"theta": [0.05, 0.3]},
        "train": {"epochs": 7, "lr": 0.002, "seed": 11,
                  "schedule": "cosine", "restore_best": True},
        "sim": {"n_steps": 3, "eps": 0.5, "noise_scale": [0.01, 0.02, 0.03],
                "param_box": {"theta": [0.02, 0.4]}},
        "damping": {"n_nodes": 128},
        "paths": {"data": "a.csv", "out": "b.txt"},
    }
    cfg = load_config(_write(tmp_path, doc))
    assert cfg.bounds.theta == (0.05, 0.3)
    assert cfg.bounds.kappa == default_config().bounds.kappa
    assert cfg.train.epochs == 7 and cfg.train.lr == 0.002
    assert cfg.train.schedule == "cosine" and cfg.train.restore_best is True
    assert cfg.train.batch_size == 1000
    assert cfg.sim.n_steps == 3 and cfg.sim.eps == 0.5
    assert cfg.sim.noise_scale == (0.01, 0.02, 0.03)
    assert cfg.sim.param_box.theta == (0.02, 0.4)
    assert cfg.sim.param_box.rho == (-1.0, 1.0)
    assert cfg.damping.n_nodes == 128
    assert cfg.paths == {"data": "a.csv", "out": "b.txt"}


def test_unknown_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match="trainx"):
        load_config(_write(tmp_path, {"trainx": {}}))


def test_unknown_key_in_section_rejected(tmp_path):
    with pytest.raises(ConfigError, match="learning_rate"):
        load_config(_write(tmp_path, {"train": {"learning_rate": 0.1}}))


def test_unknown_param_box_key_rejected(tmp_path):
    doc = {"sim": {"param_box": {"kappa": [1, 2]}}}
    with pytest.raises(ConfigError, match="kappa"):
        load_config(_write(tmp_path, doc))


def test_bad_pair_shape_rejected(tmp_path):
    with pytest.raises(ConfigError, match=r"\[lo, hi\] pair"):
        load_config(_write(tmp_path, {"bounds": {"theta": [0.1]}}))
    with pytest.raises(ConfigError, match=r"\[lo, hi\] pair"):
        load_config(_write(tmp_path, {"bounds": {"theta": "wide"}}))


def test_dataclass_rejection_is_wrapped(tmp_path):
    with pytest.raises(ConfigError, match="invalid config value"):
        load_config(_write(tmp_path, {"train": {"epochs": -1}}))
    with pytest.raises(ConfigError, match="invalid config value"):
        load_config(_write(tmp_path, {"sim": {"dt": 0.0}}))


def test_section_must_be_object(tmp_path):
    with pytest.raises(ConfigError, match="must be a JSON object"):
        load_config(_write(tmp_path, {"train": [1, 2]}))


def test_root_must_be_object(tmp_path):
    with pytest.raises(ConfigError, match="root"):
        load_config(_write(tmp_path, [1, 2]))


def test_invalid_json_reported_with_path(tmp_path):
    path = _write(tmp_path, "{not json", name="broken.json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(path)


def test_missing_file_raises_oserror(tmp_path):
    with pytest.raises(OSError):
        load_config(str(tmp_path / "absent.json"))


def test_paths_values_must_be_strings(tmp_path):
    with pytest.raises(ConfigError, match="string"):
        load_config(_write(tmp_path, {"paths": {"out": 3}}))


def test_unknown_path_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown path key"):
        load_config(_write(tmp_path, {"paths": {"output": "x.csv"}}))
    with pytest.raises(ConfigError, match="unknown path key"):
        RunConfig(bounds=default_config().bounds, train=default_config().train,
                  sim=default_config().sim, damping=default_config().damping,
                  paths={"weights": "w.txt"})
