"""Run configuration files (TOML).

Grammar: up to five tables, every key optional, unknown keys rejected::

    [run]          # name = "agnostic" | "Eb<b>" | "Eb<b>-Ef<f>", seed, maze, layer, f_max, e_min
    [train]        # any TrainConfig field
    [env]          # any EnvConfig field
    [eval]         # episodes, log_episodes, trace_stride, deterministic
    [experiment]   # run_configs = [...], seeds = [...], workers, eval_layers = ["off", "on"]
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields

from ..config import EnvConfig
from ..safe_rl.agent import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


RUN_KEYS = {"name", "seed", "maze", "layer", "f_max", "e_min"}
EVAL_DEFAULTS = {"episodes": 100, "log_episodes": 1, "trace_stride": 10, "deterministic": True}
EXPERIMENT_DEFAULTS = {"run_configs": ["agnostic"], "seeds": [0, 1, 2], "workers": 1, "eval_layers": ["off", "on"]}


@dataclass
class FileConfig:
    run: dict = field(default_factory=dict)
    train: TrainConfig = field(default_factory=TrainConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    eval: dict = field(default_factory=lambda: dict(EVAL_DEFAULTS))
    experiment: dict = field(default_factory=lambda: dict(EXPERIMENT_DEFAULTS))


def _check(section, given, allowed):
    unknown = set(given) - set(allowed)
    if unknown:
        raise ConfigError(f"[{section}] unknown keys: {', '.join(sorted(unknown))}")


def parse_config(data: dict) -> FileConfig:
    _check("top level", data, {"run", "train", "env", "eval", "experiment"})
    for k, v in data.items():
        if not isinstance(v, dict):
            raise ConfigError(f"[{k}] must be a table")
    cfg = FileConfig()
    run = data.get("run", {})
    _check("run", run, RUN_KEYS)
    cfg.run = dict(run)
    train = data.get("train", {})
    _check("train", train, {f.name for f in fields(TrainConfig)})
    env = data.get("env", {})
    _check("env", env, {f.name for f in fields(EnvConfig)})
    ev = data.get("eval", {})
    _check("eval", ev, EVAL_DEFAULTS)
    ex = data.get("experiment", {})
    _check("experiment", ex, EXPERIMENT_DEFAULTS)
    try:
        cfg.train = TrainConfig(**train)
        cfg.env = EnvConfig(**env)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    cfg.eval.update(ev)
    cfg.experiment.update(ex)
    if any(layer not in ("on", "off") for layer in cfg.experiment["eval_layers"]):
        raise ConfigError("[experiment] eval_layers entries must be 'on' or 'off'")
    return cfg


def load_config(path) -> FileConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    return parse_config(data)
