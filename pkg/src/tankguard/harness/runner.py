"""Train and evaluate one (run config, seed) with on-disk artifacts."""
from __future__ import annotations

import shutil
from pathlib import Path

from ..config import EnvConfig, RunConfig
from ..maze import load_maze
from ..records import config_hash, write_csv
from ..safe_rl import EVAL_COLUMNS, SafeSac, TrainConfig, evaluate, load_bundle, train
from .episode_log import dump_json, write_episode_log, write_tank_traces


def prepare_dir(path, overwrite=False):
    """Create an output directory, refusing to reuse a non-empty one."""
    p = Path(path)
    if p.exists() and any(p.iterdir()):
        if not overwrite:
            raise FileExistsError(f"{p} is not empty; pass --overwrite to replace it")
        shutil.rmtree(p)
    p.mkdir(parents=True, exist_ok=True)
    return p


def train_dir(root, run: RunConfig):
    return Path(root) / run.name / f"seed{run.seed}"


def eval_run(run_name, layer, monitor_run: RunConfig | None, terminate=False, maze=None):
    """Evaluation constraints: deployment tank by default, else ``monitor_run``."""
    if monitor_run is None:
        run = RunConfig.deployment(layer=layer)
    else:
        run = monitor_run.with_(layer=layer, monitor_only=not terminate)
    return run.with_(maze=maze or run.maze)


def run_train(run: RunConfig, cfg: TrainConfig, env_cfg: EnvConfig, out_dir, pretrained=None, overwrite=False,
              progress=None):
    out = prepare_dir(out_dir, overwrite)
    safety = None
    if pretrained is not None:
        safety, _, _, _ = load_bundle(pretrained)
    return train(run, cfg, out, env_cfg, safety_from=safety, progress=progress)


def run_eval(checkpoint, out_dir, layer=False, monitor: RunConfig | None = None, terminate=False, episodes=100,
             seed=0, log_episodes=1, trace_stride=10, deterministic=True, overwrite=False):
    agent, train_run, env_cfg, meta = load_bundle(checkpoint)
    run = eval_run(train_run.name, layer, monitor, terminate, maze=train_run.maze)
    spec = load_maze(run.maze)
    res = evaluate(agent, run, episodes=episodes, seed=seed, env_cfg=env_cfg, deterministic=deterministic,
                   trace=True, log_episodes=range(min(log_episodes, episodes)))
    out = prepare_dir(out_dir, overwrite)
    chash = config_hash(meta["config_hash"], run.to_dict(), episodes, seed)
    hmeta = {"config_hash": chash, "seeds": f"train={train_run.seed} eval={seed}"}
    write_csv(out / "episodes.csv", EVAL_COLUMNS, res.rows, hmeta)
    write_tank_traces(out / "tank_traces.csv", res.traces, hmeta, stride=trace_stride)
    for ep, r in res.logged.items():
        write_episode_log(out / f"episode_{ep:03d}.csv", r, run, env_cfg, spec, chash, hmeta["seeds"])
    summary = {
        "label": f"{train_run.name}/layer-{'on' if layer else 'off'}",
        "train_run": train_run.name, "seed": train_run.seed, "eval_seed": seed, "maze": spec.name,
        "layer": layer, "monitor": run.to_dict(), "config_hash": chash, "checkpoint": str(checkpoint),
        **res.summary,
    }
    dump_json(out / "summary.json", summary)
    return summary, res
