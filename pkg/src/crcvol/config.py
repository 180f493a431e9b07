"""Structured run configuration shared by the command-line tools.

A config file is a single JSON document with up to five optional sections:

    {
      "bounds":  { ... SamplingBounds fields, each a [lo, hi] pair ... },
      "train":   { "epochs": 200, "batch_size": 1000, "lr": 0.001,
                   "plateau_factor": 0.5, "plateau_patience": 10,
                   "min_lr": 1e-05, "val_fraction": 0.1,
                   "schedule": "plateau" or "cosine",
                   "restore_best": false, "seed": 0 },
      "sim":     { "n_steps": 250, "dt": 0.0027397..., "eps": 0.0,
                   "noise_scale": 0.01 or [st, ss, sr], "rel_cap": 0.05,
                   "param_box": {"theta": [lo, hi], "sigma": [lo, hi],
                                 "rho": [lo, hi]},
                   "seed": 0, "surface_engine": "fourier" },
      "damping": { "alpha": 0.75, "trunc": 200.0, "n_nodes": 256,
                   "tol": 1e-09, "max_nodes": 16384, "trunc_cap": 12800.0 },
      "paths":   { "data": ..., "nn1": ..., "nn2": ..., "out": ...,
                   "out_dir": ... }
    }

Missing sections fall back to library defaults.  Unknown keys anywhere are
rejected with ConfigError so typos never silently revert to defaults.
Command-line flags override file values.
"""

from __future__ import annotations

import dataclasses
import json

from .datagen import SamplingBounds, default_bounds
from .errors import ConfigError
from .neural.training import TrainConfig
from .pricing import DampingConfig
from .sim import ParamBox, SimConfig

_PATH_KEYS = frozenset({"data", "nn1", "nn2", "out", "out_dir"})
_SECTIONS = frozenset({"bounds", "train", "sim", "damping", "paths"})


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Validated bundle of the per-module configs plus artifact paths."""

    bounds: SamplingBounds
    train: TrainConfig
    sim: SimConfig
    damping: DampingConfig
    paths: dict

    def __post_init__(self):
        unknown = set(self.paths) - _PATH_KEYS
        if unknown:
            raise ConfigError(f"unknown path key(s): {sorted(unknown)}")


def default_config() -> RunConfig:
    return RunConfig(bounds=default_bounds(), train=TrainConfig(epochs=200),
                     sim=SimConfig(n_steps=250), damping=DampingConfig(),
                     paths={})


def _reject_unknown(section: str, data: dict, allowed) -> None:
    if not isinstance(data, dict):
        raise ConfigError(f"section '{section}' must be a JSON object")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(
            f"unknown key(s) in '{section}': {sorted(unknown)}")


def _pair(section: str, key: str, value) -> tuple:
    if (not isinstance(value, (list, tuple)) or len(value) != 2
            or not all(isinstance(v, (int, float)) for v in value)):
        raise ConfigError(
            f"'{section}.{key}' must be a [lo, hi] pair of numbers")
    return float(value[0]), float(value[1])


def _bounds_from(data: dict) -> SamplingBounds:
    fields = [f.name for f in dataclasses.fields(SamplingBounds)]
    _reject_unknown("bounds", data, fields)
    base = default_bounds()
    kwargs = {name: _pair("bounds", name, data[name]) if name in data
              else getattr(base, name) for name in fields}
    return SamplingBounds(**kwargs)


def _train_from(data: dict) -> TrainConfig:
    fields = [f.name for f in dataclasses.fields(TrainConfig)]
    _reject_unknown("train", data, fields)
    kwargs = dict(data)
    kwargs.setdefault("epochs", 200)
    return TrainConfig(**kwargs)


def _sim_from(data: dict) -> SimConfig:
    fields = [f.name for f in dataclasses.fields(SimConfig)]
    _reject_unknown("sim", data, fields)
    kwargs = dict(data)
    kwargs.setdefault("n_steps", 250)
    if "noise_scale" in kwargs and isinstance(kwargs["noise_scale"], list):
        kwargs["noise_scale"] = tuple(kwargs["noise_scale"])
    if "param_box" in kwargs:
        box = kwargs["param_box"]
        _reject_unknown("sim.param_box", box, ("theta", "sigma", "rho"))
        kwargs["param_box"] = ParamBox(
            theta=_pair("sim.param_box", "theta", box.get("theta", (0.01, 0.5))),
            sigma=_pair("sim.param_box", "sigma", box.get("sigma", (0.01, 0.5))),
            rho=_pair("sim.param_box", "rho", box.get("rho", (-1.0, 1.0))))
    return SimConfig(**kwargs)


def _damping_from(data: dict) -> DampingConfig:
    fields = [f.name for f in dataclasses.fields(DampingConfig)]
    _reject_unknown("damping", data, fields)
    return DampingConfig(**data)


def load_config(path) -> RunConfig:
    """Parse and validate a JSON config file into a RunConfig.

    Raises ConfigError for schema problems (unknown keys, bad value shapes,
    values rejected by the owning dataclass); I/O errors propagate as OSError
    and malformed JSON as ConfigError.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown("config", raw, _SECTIONS)
    base = default_config()
    try:
        bounds = _bounds_from(raw["bounds"]) if "bounds" in raw else base.bounds
        train = _train_from(raw["train"]) if "train" in raw else base.train
        sim = _sim_from(raw["sim"]) if "sim" in raw else base.sim
        damping = (_damping_from(raw["damping"]) if "damping" in raw
                   else base.damping)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}")
    paths = raw.get("paths", {})
    if not isinstance(paths, dict) or not all(
            isinstance(v, str) for v in paths.values()):
        raise ConfigError("'paths' must be an object of string values")
    return RunConfig(bounds=bounds, train=train, sim=sim, damping=damping,
                     paths=dict(paths))
