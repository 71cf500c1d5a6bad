"""Per-tick episode logs and their bitwise replay."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..config import EnvConfig, RunConfig
from ..maze import MazeEnv, MazeSpec, load_maze
from ..maze.kernel import TRACE_FIELDS
from ..records import read_csv, write_csv

EPISODE_SCHEMA = "tankguard.episode/1"
EPISODE_COLUMNS = ("step", "tick", "a_dx", "a_dy", "a_k1", "a_k2", *TRACE_FIELDS, "k_eig1", "k_eig2", "reward")


class ReplayMismatch(Exception):
    pass


def _compact(d):
    return json.dumps(d, sort_keys=True, separators=(",", ":"))


def episode_meta(run: RunConfig, env_cfg: EnvConfig, spec: MazeSpec, reset_seed, config_hash, seed):
    return {
        "schema": EPISODE_SCHEMA,
        "config_hash": config_hash,
        "seeds": seed,
        "reset_seed": _compact(list(reset_seed)),
        "run_config": _compact(run.to_dict()),
        "env_config": _compact(env_cfg.to_dict()),
        "maze": _compact(spec.to_dict()),
    }


def episode_rows(steps, rewards):
    """Flatten ``(step, tick, action, rows)`` records into per-tick dicts."""
    out = []
    for (step, tick0, action, rows), reward in zip(steps, rewards):
        for j, r in enumerate(rows):
            kxx, kxy, kyy = r[6], r[7], r[8]
            eig = np.linalg.eigvalsh(np.array([[kxx, kxy], [kxy, kyy]]))
            row = {"step": step, "tick": tick0 + j, "a_dx": float(action[0]), "a_dy": float(action[1]),
                   "a_k1": float(action[2]), "a_k2": float(action[3]), "k_eig1": float(eig[0]),
                   "k_eig2": float(eig[1]), "reward": reward}
            for name, v in zip(TRACE_FIELDS, r):
                row[name] = float(v)
            for name in ("depleted", "viol_force", "viol_tank", "viol_flow"):
                row[name] = int(row[name])
            out.append(row)
    return out


def write_episode_log(path, result, run: RunConfig, env_cfg: EnvConfig, spec: MazeSpec, config_hash, seed):
    meta = episode_meta(run, env_cfg, spec, result.reset_seed, config_hash, seed)
    write_csv(path, EPISODE_COLUMNS, episode_rows(result.steps, result.rewards), meta)


def replay_episode(path):
    """Re-simulate a logged episode from its actions and compare every tank
    trace value bitwise. Returns the number of ticks checked; raises
    :class:`ReplayMismatch` on the first difference."""
    meta, rows = read_csv(path)
    if meta.get("schema") != EPISODE_SCHEMA:
        raise ValueError(f"{path}: not an episode log (schema {meta.get('schema')!r})")
    if not rows:
        raise ValueError(f"{path}: episode log has no ticks")
    run = RunConfig.from_dict(json.loads(meta["run_config"]))
    env_cfg = EnvConfig.from_dict(json.loads(meta["env_config"]))
    spec = load_maze(MazeSpec.from_dict(json.loads(meta["maze"])))
    env = MazeEnv(spec, run, env_cfg)
    env.reset(seed=json.loads(meta["reset_seed"]))
    env.record = True
    by_step: dict[int, list] = {}
    for r in rows:
        by_step.setdefault(int(r["step"]), []).append(r)
    checked = 0
    cols = [TRACE_FIELDS.index(c) for c in ("e", "flow_raw", "flow_applied", "alpha")]
    for step in sorted(by_step):
        logged = by_step[step]
        a = [float(logged[0][c]) for c in ("a_dx", "a_dy", "a_k1", "a_k2")]
        env.step(a)
        _, _, _, sim = env.trace[-1]
        if len(sim) != len(logged):
            raise ReplayMismatch(f"step {step}: {len(sim)} ticks simulated, {len(logged)} logged")
        for j, r in enumerate(logged):
            for c in cols:
                name = TRACE_FIELDS[c]
                if float(r[name]) != sim[j, c]:
                    raise ReplayMismatch(f"tick {r['tick']}: {name} logged {r[name]} replayed {sim[j, c]!r}")
            checked += 1
    return checked


def write_tank_traces(path, traces, meta, stride=10):
    """Tidy ``episode,tick,e`` rows sampled every ``stride`` ticks (last tick always kept)."""
    rows = []
    for ep, tr in enumerate(traces):
        e = tr["e"]
        idx = list(range(0, len(e), stride))
        if idx[-1] != len(e) - 1:
            idx.append(len(e) - 1)
        rows.extend({"episode": ep, "tick": int(i), "e": float(e[i])} for i in idx)
    write_csv(path, ("episode", "tick", "e"), rows, meta)


def dump_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
