"""Multi-seed, multi-config experiment orchestration."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ..config import EnvConfig, RunConfig
from ..safe_rl import TrainConfig
from .runner import run_eval, run_train, train_dir


@dataclass
class ExperimentPlan:
    run_configs: list
    seeds: list
    out_dir: Path
    maze: str = "corridor"
    train: TrainConfig = field(default_factory=TrainConfig)
    env: EnvConfig = field(default_factory=EnvConfig)
    eval_episodes: int = 100
    eval_layers: tuple = ("off", "on")
    workers: int = 1
    overwrite: bool = False

    def __post_init__(self):
        self.out_dir = Path(self.out_dir)
        pairs = self.pairs()
        if len(set(pairs)) != len(pairs):
            raise ValueError("experiment plan repeats a (run config, seed) pair")
        for name in self.run_configs:
            RunConfig.from_name(name)
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def pairs(self):
        return [(name, int(seed)) for name in self.run_configs for seed in self.seeds]

    def runs(self):
        return [RunConfig.from_name(n, seed=s, maze=self.maze) for n, s in self.pairs()]

    def execute(self):
        """Train and evaluate every pair; per-pair results do not depend on ``workers``."""
        jobs = [(run, self) for run in self.runs()]
        if self.workers == 1:
            return [_job(j) for j in jobs]
        with ProcessPoolExecutor(self.workers, initializer=_single_thread) as pool:
            return list(pool.map(_job, jobs))


def _single_thread():
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = "1"


def _job(args):
    run, plan = args
    tdir = train_dir(plan.out_dir / "train", run)
    run_train(run, plan.train, plan.env, tdir, overwrite=plan.overwrite)
    out = {"run": run.name, "seed": run.seed, "train_dir": str(tdir), "evals": []}
    for layer in plan.eval_layers:
        edir = plan.out_dir / "eval" / f"{run.name}-layer-{layer}" / f"seed{run.seed}"
        summary, _ = run_eval(tdir / "final", edir, layer=layer == "on", episodes=plan.eval_episodes,
                              seed=run.seed, overwrite=plan.overwrite)
        out["evals"].append(str(edir))
    return out
