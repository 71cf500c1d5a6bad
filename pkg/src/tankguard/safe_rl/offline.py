"""Offline violation dataset and safety-critic pretraining."""
from __future__ import annotations

import numpy as np

from ..config import EnvConfig, RunConfig
from ..maze import MazeEnv
from .agent import SafeSac
from .replay import ReplayBuffer, Transition


def step_mask(info):
    return (info["violated_force"], info["violated_tank"], info["violated_flow"])


def collect_offline(n_tuples, maze="canonical", run: RunConfig | None = None, seed=0, horizon=1,
                    jitter=0.015, env_cfg: EnvConfig | None = None):
    """Roll out uniformly random actions for ``horizon`` steps from the maze's
    spawn points (round robin, jittered) until ``n_tuples`` transitions exist.

    Short rollouts keep most samples in free space so violations stay a few
    percent of the data. Deterministic in ``seed``.
    """
    if n_tuples <= 0 or horizon <= 0:
        raise ValueError("n_tuples and horizon must be positive")
    env = MazeEnv(maze, run or RunConfig(maze=maze), env_cfg)
    spawns = env.spec.spawn_points or (env.spec.start,)
    rng = np.random.default_rng(seed)
    out: list[Transition] = []
    ep = 0
    while len(out) < n_tuples:
        s = env.reset(seed=int(rng.integers(2**63)), start=spawns[ep % len(spawns)], jitter=jitter)
        ep += 1
        for _ in range(horizon):
            a = env.sample_action(rng)
            o = env.step(a)
            out.append(Transition(s, o.info["action"], o.reward, o.observation, o.done, step_mask(o.info)))
            s = o.observation
            if o.done or len(out) == n_tuples:
                break
    return out


def split(transitions, holdout=0.2, seed=0):
    """Shuffle and split into (train, held-out)."""
    idx = np.random.default_rng(seed).permutation(len(transitions))
    n_hold = int(round(holdout * len(transitions)))
    return [transitions[i] for i in idx[n_hold:]], [transitions[i] for i in idx[:n_hold]]


def pretrain_safety(agent: SafeSac, transitions, steps=None, seed=0, violation_fraction=None, log_every=0,
                    callback=None):
    """Fit the safety critic and recovery policy on a fixed dataset."""
    cfg = agent.cfg
    steps = cfg.pretrain_steps if steps is None else steps
    vf = cfg.safety_violation_fraction if violation_fraction is None else violation_fraction
    buf = ReplayBuffer(len(transitions))
    buf.extend(transitions)
    rng = np.random.default_rng(seed)
    history = []
    for i in range(steps):
        stats = agent.safety_update(buf.batch(buf.sample_idx(rng, cfg.batch_size, vf)))
        if log_every and (i % log_every == 0 or i == steps - 1):
            history.append({"step": i, **stats})
            if callback:
                callback(history[-1])
    return history


def risk_scores(agent: SafeSac, transitions):
    s = np.stack([t.s for t in transitions])
    a = agent.to_unit(np.stack([t.a for t in transitions]))
    labels = np.array([t.violated for t in transitions])
    return agent.risk(s, a), labels


def safety_auc(agent: SafeSac, transitions):
    """ROC AUC of the safety critic separating violating from safe transitions."""
    from sklearn.metrics import roc_auc_score

    scores, labels = risk_scores(agent, transitions)
    if labels.all() or not labels.any():
        raise ValueError("AUC needs both violating and safe transitions")
    return float(roc_auc_score(labels, scores))
