"""Online CMDP training loop, checkpoint bundles and policy evaluation."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import EnvConfig, RunConfig
from ..maze import MazeEnv
from ..records import CsvAppender, config_hash
from .agent import RECOVERY, SafeSac, TrainConfig
from .offline import collect_offline, pretrain_safety, step_mask
from .replay import ReplayBuffer, Transition

log = logging.getLogger(__name__)

TRAIN_COLUMNS = (
    "episode", "steps", "reward", "success", "reason",
    "violated_force", "violated_tank", "violated_flow", "monitor_tank", "monitor_flow",
    "recovery_steps", "energy_spent", "tank_end", "min_tank", "alpha", "loss_q", "loss_pi", "loss_safety",
)
EVAL_COLUMNS = (
    "episode", "steps", "reward", "success", "reason",
    "violated_force", "violated_tank", "violated_flow", "force_steps", "tank_steps", "flow_steps",
    "recovery_steps", "energy_spent", "tank_end", "min_tank", "min_flow", "peak_force",
)


@dataclass
class EpisodeResult:
    row: dict
    transitions: list = field(default_factory=list)
    ticks: dict | None = None  # per-tick arrays when traced
    steps: list = field(default_factory=list)  # (step, tick, action, trace rows) when traced
    rewards: list = field(default_factory=list)
    reset_seed: list | None = None


def run_episode(env: MazeEnv, agent: SafeSac, rng, reset_seed, deterministic=False, random_task_until=None,
                on_step=None, trace=False):
    """Roll one episode with the risk-gated policy.

    ``random_task_until`` replaces the task policy with uniform actions while
    the callable returns True. ``on_step(transition)`` runs after every step.
    """
    obs = env.reset(seed=reset_seed)
    env.record = trace
    e0 = env.state.tank.e
    totals = {"reward": 0.0, "recovery_steps": 0, "force_steps": 0, "tank_steps": 0, "flow_steps": 0}
    flags = dict.fromkeys(("violated_force", "violated_tank", "violated_flow", "monitor_tank", "monitor_flow"), False)
    min_tank, min_flow, peak = e0, 0.0, 0.0
    transitions = []
    rewards = []
    while True:
        random_task = bool(random_task_until and random_task_until())
        a_exec, a_task, tag, _ = agent.select_action(obs, rng, deterministic=deterministic, random_task=random_task)
        out = env.step(agent.from_unit(a_exec))
        info = out.info
        tr = Transition(obs, info["action"], out.reward, out.observation, out.done, step_mask(info),
                        agent.from_unit(a_task))
        transitions.append(tr)
        if on_step is not None:
            on_step(tr)
        totals["reward"] += out.reward
        rewards.append(out.reward)
        totals["recovery_steps"] += tag == RECOVERY
        for k in flags:
            flags[k] |= info[k]
        totals["force_steps"] += info["violated_force"]
        totals["tank_steps"] += info["violated_tank"]
        totals["flow_steps"] += info["violated_flow"]
        min_tank = min(min_tank, info["min_tank"])
        min_flow = min(min_flow, info["min_flow"])
        peak = max(peak, info["peak_force"])
        obs = out.observation
        if out.done:
            break
    tank_end = env.state.tank.e
    row = {
        "steps": env.state.step, "success": info["success"], "reason": info["reason"],
        **flags, **totals,
        "energy_spent": e0 - tank_end, "tank_end": tank_end, "min_tank": min_tank, "min_flow": min_flow,
        "peak_force": peak,
    }
    ticks, steps = None, []
    if trace:
        rows = np.concatenate([t[3] for t in env.trace]) if env.trace else np.zeros((0, 17))
        stiff = np.array([t[3][-1, 6:9] for t in env.trace])
        ticks = {"e": np.concatenate([[e0], rows[:, 9]]), "flow_applied": rows[:, 11], "alpha": rows[:, 12],
                 "stiffness": stiff}
        steps, env.trace = env.trace, []
        env.record = False
    return EpisodeResult(row, transitions, ticks, steps, rewards, list(reset_seed))


def _episode_seed(seed, episode, stream):
    return [int(seed), int(stream), int(episode)]


def bundle_meta(run: RunConfig, env_cfg: EnvConfig, cfg: TrainConfig):
    return {"run_config": run.to_dict(), "env_config": env_cfg.to_dict(),
            "config_hash": config_hash(run.to_dict(), env_cfg.to_dict(), cfg.to_dict())}


def save_bundle(agent: SafeSac, directory, run: RunConfig, env_cfg: EnvConfig, episode):
    d = Path(directory)
    agent.save(d, extra={**bundle_meta(run, env_cfg, agent.cfg), "episode": episode})
    (d / "runconfig.json").write_text(json.dumps(run.to_dict(), indent=2, sort_keys=True) + "\n")


def load_bundle(directory):
    """Return ``(agent, run_config, env_config, meta)`` from a checkpoint directory."""
    d = Path(directory)
    if not (d / "bundle.json").is_file():
        raise FileNotFoundError(f"{d}: not a checkpoint bundle (bundle.json missing)")
    meta = json.loads((d / "bundle.json").read_text())
    env_cfg = EnvConfig.from_dict(meta["env_config"])
    agent, meta = SafeSac.load(d, env_cfg=env_cfg)
    return agent, RunConfig.from_dict(meta["run_config"]), env_cfg, meta


@dataclass
class TrainResult:
    agent: SafeSac
    log: list
    out_dir: Path | None
    offline_violation_rate: float | None = None


def prepare_safety(agent: SafeSac, run: RunConfig, env_cfg: EnvConfig, seed):
    """Collect the offline dataset for ``run`` and pretrain the safety models."""
    cfg = agent.cfg
    data = collect_offline(cfg.offline_tuples, maze=run.maze, run=run.with_(monitor_only=False, layer=False),
                           seed=seed, horizon=cfg.offline_horizon, jitter=cfg.offline_jitter, env_cfg=env_cfg)
    rate = float(np.mean([t.violated for t in data]))
    if rate == 0.0:
        log.warning("offline dataset has no violations; the safety critic will predict zero risk")
    pretrain_safety(agent, data, seed=seed)
    return rate


def train(run: RunConfig, cfg: TrainConfig | None = None, out_dir=None, env_cfg: EnvConfig | None = None,
          safety_from: SafeSac | None = None, progress=None) -> TrainResult:
    """Train one (run config, seed). Energy constraints of ``run`` end episodes.

    With ``out_dir`` the training log, a wall-clock sidecar and checkpoint
    bundles are written there. The log is a pure function of the configs.
    """
    cfg = cfg or TrainConfig()
    env_cfg = env_cfg or EnvConfig()
    if run.monitor_only:
        raise ValueError("training needs terminating constraints; monitor_only is an evaluation setting")
    env = MazeEnv(run.maze, run, env_cfg)
    agent = SafeSac(cfg, seed=run.seed, env_cfg=env_cfg)
    rng = np.random.default_rng([run.seed, 1])
    rate = None
    if cfg.use_safety:
        if safety_from is not None:
            agent.load_safety_from(safety_from)
        else:
            rate = prepare_safety(agent, run, env_cfg, seed=run.seed)
    buf = ReplayBuffer(cfg.replay_capacity)
    out = Path(out_dir) if out_dir is not None else None
    meta = {"config_hash": bundle_meta(run, env_cfg, cfg)["config_hash"], "run": run.name, "seed": run.seed,
            "maze": run.maze}
    logw = timing = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        logw = CsvAppender(out / "train_log.csv", TRAIN_COLUMNS, meta)
        timing = CsvAppender(out / "timing.csv", ("episode", "wall_clock_s"), meta)
        (out / "train_config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    stats = {"loss_q": [], "loss_pi": [], "loss_safety": []}
    total_steps = [0]

    def learn(tr):
        buf.add(tr)
        total_steps[0] += 1
        if len(buf) < cfg.batch_size:
            return
        for _ in range(cfg.updates_per_step):
            s = agent.sac_update(buf.batch(buf.sample_idx(rng, cfg.batch_size)), rng)
            stats["loss_q"].append(s["loss_q"])
            stats["loss_pi"].append(s["loss_pi"])
            if cfg.use_safety and not cfg.freeze_safety:
                idx = buf.sample_idx(rng, cfg.batch_size, cfg.safety_violation_fraction)
                stats["loss_safety"].append(agent.safety_update(buf.batch(idx))["loss_safety"])

    rows = []
    t0 = time.perf_counter()
    try:
        for ep in range(cfg.episodes):
            for v in stats.values():
                v.clear()
            res = run_episode(env, agent, rng, _episode_seed(run.seed, ep, 0),
                              random_task_until=lambda: total_steps[0] < cfg.warmup_steps, on_step=learn)
            row = {"episode": ep, **res.row, "alpha": agent.alpha}
            for k, v in stats.items():
                row[k] = float(np.mean(v)) if v else ""
            rows.append(row)
            if logw:
                logw.write(row)
                timing.write({"episode": ep, "wall_clock_s": round(time.perf_counter() - t0, 3)})
                if cfg.checkpoint_every and (ep + 1) % cfg.checkpoint_every == 0:
                    save_bundle(agent, out / "checkpoints" / f"ep{ep + 1:05d}", run, env_cfg, ep + 1)
            if progress:
                progress(row)
    finally:
        if logw:
            logw.close()
            timing.close()
    if out is not None:
        save_bundle(agent, out / "final", run, env_cfg, cfg.episodes)
    return TrainResult(agent, rows, out, rate)


@dataclass
class EvalResult:
    rows: list
    traces: list  # per-episode dicts of per-tick arrays
    summary: dict
    logged: dict = field(default_factory=dict)  # episode -> EpisodeResult with raw step traces


def summarize(rows):
    n = len(rows)
    col = lambda k: np.array([float(r[k]) for r in rows])  # noqa: E731
    return {
        "episodes": n,
        "success": int(col("success").sum()),
        "violations_force": int(col("violated_force").sum()),
        "violations_tank": int(col("violated_tank").sum()),
        "violations_flow": int(col("violated_flow").sum()),
        "energy_violations": int(np.sum(col("violated_tank").astype(bool) | col("violated_flow").astype(bool))),
        "recovery_rate": float(col("recovery_steps").sum() / max(col("steps").sum(), 1)),
        "mean_tank_end": float(col("tank_end").mean()),
        "mean_energy_spent": float(col("energy_spent").mean()),
        "mean_steps": float(col("steps").mean()),
    }


def evaluate(agent: SafeSac, run: RunConfig, episodes=100, seed=0, env_cfg: EnvConfig | None = None,
             deterministic=True, trace=True, log_episodes=()) -> EvalResult:
    """Roll the policy without learning.

    Violations are counted per episode. With ``run.monitor_only`` energy
    violations are recorded but do not end episodes. Episodes listed in
    ``log_episodes`` keep their raw per-tick traces for episode logs.
    """
    env = MazeEnv(run.maze, run, env_cfg or agent.env_cfg)
    rng = np.random.default_rng([seed, 2])
    rows, traces, logged = [], [], {}
    keep = set(log_episodes)
    for ep in range(episodes):
        res = run_episode(env, agent, rng, _episode_seed(seed, ep, 3), deterministic=deterministic,
                          trace=trace or ep in keep)
        rows.append({"episode": ep, **res.row})
        if trace:
            traces.append(res.ticks)
        if ep in keep:
            res.transitions = []
            logged[ep] = res
    return EvalResult(rows, traces, summarize(rows), logged)
