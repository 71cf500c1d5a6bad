"""Soft actor-critic task policy with a safety critic and a recovery policy.

Networks see normalized inputs: wrench entries divided by ``force_scale``
and positions multiplied by ``position_scale``; actions live in [-1, 1]^4
and are mapped to physical units by the environment.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from ..approximator import Adam, Mlp, load_weights, save_weights, squashed_sample, squashed_sample_grads
from ..config import EnvConfig
from ..maze import ACT_DIM, OBS_DIM, WRENCH_DIM

TASK, RECOVERY = "task", "recovery"
NETWORK_FILES = ("actor", "critic1", "critic2", "safety", "recovery")


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.9
    gamma_safe: float = 0.85
    eps_risk: float = 0.65
    lr: float = 3e-4
    batch_size: int = 256
    tau: float = 0.005
    target_entropy: float = -float(ACT_DIM)
    init_alpha: float = 1.0
    hidden: tuple = (256, 256)
    replay_capacity: int = 1_000_000
    episodes: int = 2000
    warmup_steps: int = 1000
    updates_per_step: int = 1
    reward_scale: float = 0.01
    force_scale: float = 40.0
    position_scale: float = 5.0
    use_safety: bool = True
    freeze_safety: bool = False
    safety_violation_fraction: float = 0.0
    offline_tuples: int = 40_000
    offline_horizon: int = 1
    offline_jitter: float = 0.015
    pretrain_steps: int = 5000
    checkpoint_every: int = 100

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if not (0 < self.gamma < 1 and 0 < self.gamma_safe < 1):
            raise ValueError("discount factors must lie in (0, 1)")
        if not 0 < self.eps_risk < 1:
            raise ValueError("eps_risk must lie in (0, 1)")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown training options: {sorted(unknown)}")
        return cls(**d)


def _soft_update(target: Mlp, source: Mlp, tau):
    target.theta *= 1.0 - tau
    target.theta += tau * source.theta


@dataclass
class SafeSac:
    cfg: TrainConfig
    seed: int = 0
    nets: dict = field(default_factory=dict)
    env_cfg: EnvConfig = field(default_factory=EnvConfig)

    def __post_init__(self):
        c = self.env_cfg
        self.act_lo = np.array([-c.dp_max, -c.dp_max, c.k_min, c.k_min])
        self.act_hi = np.array([c.dp_max, c.dp_max, c.k_max, c.k_max])
        rng = np.random.default_rng(self.seed)
        h = self.cfg.hidden
        if not self.nets:
            self.nets = {
                "actor": Mlp((OBS_DIM, *h, 2 * ACT_DIM), head="squashed_gaussian", rng=rng),
                "critic1": Mlp((OBS_DIM + ACT_DIM, *h, 1), rng=rng),
                "critic2": Mlp((OBS_DIM + ACT_DIM, *h, 1), rng=rng),
                "safety": Mlp((WRENCH_DIM + ACT_DIM, *h, 1), head="sigmoid", rng=rng),
                "recovery": Mlp((WRENCH_DIM, *h, ACT_DIM), head="tanh", rng=rng),
            }
        self.critic1_t = self.nets["critic1"].copy()
        self.critic2_t = self.nets["critic2"].copy()
        self.safety_t = self.nets["safety"].copy()
        self.opt = {k: Adam(n.n_params, lr=self.cfg.lr) for k, n in self.nets.items()}
        self.log_alpha = np.array([math.log(self.cfg.init_alpha)])
        self.alpha_opt = Adam(1, lr=self.cfg.lr)
        self.obs_scale = np.array([1.0 / self.cfg.force_scale] * WRENCH_DIM + [self.cfg.position_scale] * 3)
        self.updates = 0

    # -- inference -------------------------------------------------------
    @property
    def alpha(self):
        return float(math.exp(self.log_alpha[0]))

    def to_unit(self, a):
        """Physical actions (as stored in transitions) to the unit box."""
        return 2.0 * (np.asarray(a, dtype=np.float64) - self.act_lo) / (self.act_hi - self.act_lo) - 1.0

    def from_unit(self, u):
        return self.act_lo + 0.5 * (np.clip(u, -1.0, 1.0) + 1.0) * (self.act_hi - self.act_lo)

    def norm(self, obs):
        return np.asarray(obs, dtype=np.float64) * self.obs_scale

    def policy_action(self, obs, rng=None, deterministic=False):
        """Unit-box action from the task policy for one raw observation."""
        out = self.nets["actor"](self.norm(obs))
        mean, log_std = out[:ACT_DIM], out[ACT_DIM:]
        if deterministic:
            return np.tanh(mean)
        return np.tanh(mean + np.exp(log_std) * rng.standard_normal(ACT_DIM))

    def risk(self, obs, a_unit):
        """Q_risk of taking unit action ``a_unit`` at raw observation ``obs``."""
        w = self.norm(obs)[..., :WRENCH_DIM]
        x = np.concatenate([w, np.asarray(a_unit, dtype=np.float64)], axis=-1)
        y = self.nets["safety"](x)
        return y[..., 0]

    def recovery_action(self, obs):
        return self.nets["recovery"](self.norm(obs)[..., :WRENCH_DIM])

    def select_action(self, obs, rng=None, deterministic=False, random_task=False):
        """Risk-gated action.

        Returns ``(a_exec, a_task, tag, q_risk)`` in unit coordinates; ``tag``
        is ``"recovery"`` when the task action's risk exceeded ``eps_risk``.
        """
        if random_task:
            a_task = rng.uniform(-1.0, 1.0, ACT_DIM)
        else:
            a_task = self.policy_action(obs, rng, deterministic)
        if not self.cfg.use_safety:
            return a_task, a_task, TASK, float("nan")
        q = float(self.risk(obs, a_task))
        if q > self.cfg.eps_risk:
            return self.recovery_action(obs), a_task, RECOVERY, q
        return a_task, a_task, TASK, q

    # -- learning --------------------------------------------------------
    def _q_pair(self, nets, s, a):
        x = np.concatenate([s, a], axis=1)
        q1, c1 = nets[0].forward(x)
        q2, c2 = nets[1].forward(x)
        return q1[:, 0], q2[:, 0], c1, c2

    def sac_update(self, batch, rng):
        """One gradient step for critics, actor and temperature; soft target update."""
        cfg = self.cfg
        s = self.norm(batch["s"])
        s2 = self.norm(batch["s_next"])
        a = self.to_unit(batch["a_task"])
        r = batch["r"] * cfg.reward_scale
        nd = 1.0 - batch["done"].astype(np.float64)
        n = s.shape[0]
        actor = self.nets["actor"]
        alpha = self.alpha

        out2 = actor(s2)
        a2, logp2, _ = squashed_sample(out2[:, :ACT_DIM], out2[:, ACT_DIM:], rng.standard_normal((n, ACT_DIM)))
        t1, t2, _, _ = self._q_pair((self.critic1_t, self.critic2_t), s2, a2)
        y = r + cfg.gamma * nd * (np.minimum(t1, t2) - alpha * logp2)

        q1, q2, c1, c2 = self._q_pair((self.nets["critic1"], self.nets["critic2"]), s, a)
        loss_q = 0.5 * float(np.mean((q1 - y) ** 2) + np.mean((q2 - y) ** 2))
        for name, q, c in (("critic1", q1, c1), ("critic2", q2, c2)):
            g, _ = self.nets[name].backward(c, ((q - y) / n)[:, None])
            self.opt[name].step(self.nets[name].theta, g)

        out, ca = actor.forward(s)
        mean, log_std = out[:, :ACT_DIM], out[:, ACT_DIM:]
        eps = rng.standard_normal((n, ACT_DIM))
        a_pi, logp, _ = squashed_sample(mean, log_std, eps)
        q1p, q2p, c1p, c2p = self._q_pair((self.nets["critic1"], self.nets["critic2"]), s, a_pi)
        use1 = q1p <= q2p
        ones = np.ones((n, 1))
        _, gx1 = self.nets["critic1"].backward(c1p, ones)
        _, gx2 = self.nets["critic2"].backward(c2p, ones)
        dq_da = np.where(use1[:, None], gx1[:, OBS_DIM:], gx2[:, OBS_DIM:])
        loss_pi = float(np.mean(alpha * logp - np.minimum(q1p, q2p)))
        g_mean, g_logstd = squashed_sample_grads(a_pi, np.exp(log_std), eps, -dq_da / n, np.full(n, alpha / n))
        g, _ = actor.backward(ca, np.concatenate([g_mean, g_logstd], axis=1))
        self.opt["actor"].step(actor.theta, g)

        g_alpha = -np.mean(logp + cfg.target_entropy)
        self.alpha_opt.step(self.log_alpha, np.array([g_alpha]))

        _soft_update(self.critic1_t, self.nets["critic1"], cfg.tau)
        _soft_update(self.critic2_t, self.nets["critic2"], cfg.tau)
        self.updates += 1
        if not (math.isfinite(loss_q) and math.isfinite(loss_pi)):
            raise TrainingDiverged(f"non-finite SAC loss at update {self.updates}: q={loss_q} pi={loss_pi}")
        return {"loss_q": loss_q, "loss_pi": loss_pi, "alpha": self.alpha, "entropy": float(-np.mean(logp))}

    def safety_targets(self, s2w, cost):
        a_rec = self.nets["recovery"](s2w)
        q_next = self.safety_t(np.concatenate([s2w, a_rec], axis=1))[:, 0]
        return cost + (1.0 - cost) * self.cfg.gamma_safe * q_next

    def safety_update(self, batch):
        """One step on the safety critic (cross-entropy toward the recursive
        risk target) and one on the recovery policy (minimize predicted risk)."""
        s = self.norm(batch["s"])[:, :WRENCH_DIM]
        s2 = self.norm(batch["s_next"])[:, :WRENCH_DIM]
        cost = batch["mask"].any(axis=1).astype(np.float64)
        n = s.shape[0]
        target = self.safety_targets(s2, cost)
        safety = self.nets["safety"]
        p, cache = safety.forward(np.concatenate([s, self.to_unit(batch["a"])], axis=1))
        p = p[:, 0]
        pc = np.clip(p, 1e-12, 1 - 1e-12)
        loss = float(-np.mean(target * np.log(pc) + (1 - target) * np.log(1 - pc)))
        g, _ = safety.backward(cache, ((p - target) / n)[:, None], wrt_logits=True)
        self.opt["safety"].step(safety.theta, g)

        rec = self.nets["recovery"]
        a_rec, rc = rec.forward(s)
        _, sc = safety.forward(np.concatenate([s, a_rec], axis=1))
        # descend the risk logit: same minimizer as the probability, no saturation
        _, gx = safety.backward(sc, np.full((n, 1), 1.0 / n), wrt_logits=True)
        g, _ = rec.backward(rc, gx[:, WRENCH_DIM:])
        self.opt["recovery"].step(rec.theta, g)
        _soft_update(self.safety_t, safety, self.cfg.tau)
        if not math.isfinite(loss):
            raise TrainingDiverged(f"non-finite safety loss: {loss}")
        return {"loss_safety": loss, "risk_mean": float(p.mean())}

    # -- persistence -----------------------------------------------------
    def save(self, directory, extra=None):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for name in NETWORK_FILES:
            save_weights(self.nets[name], d / f"{name}.tgw")
        meta = {"train_config": self.cfg.to_dict(), "seed": self.seed, "log_alpha": float(self.log_alpha[0])}
        meta.update(extra or {})
        (d / "bundle.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, directory, cfg=None, env_cfg=None):
        d = Path(directory)
        meta = json.loads((d / "bundle.json").read_text())
        cfg = cfg or TrainConfig.from_dict(meta["train_config"])
        nets = {}
        expected = {
            "actor": (OBS_DIM, *cfg.hidden, 2 * ACT_DIM),
            "critic1": (OBS_DIM + ACT_DIM, *cfg.hidden, 1),
            "critic2": (OBS_DIM + ACT_DIM, *cfg.hidden, 1),
            "safety": (WRENCH_DIM + ACT_DIM, *cfg.hidden, 1),
            "recovery": (WRENCH_DIM, *cfg.hidden, ACT_DIM),
        }
        for name in NETWORK_FILES:
            nets[name] = load_weights(d / f"{name}.tgw", expect_sizes=expected[name])
        agent = cls(cfg, seed=meta.get("seed", 0), nets=nets, env_cfg=env_cfg or EnvConfig())
        agent.log_alpha[0] = meta.get("log_alpha", 0.0)
        return agent, meta

    def load_safety_from(self, other: "SafeSac"):
        """Adopt pretrained safety critic and recovery policy weights."""
        for name in ("safety", "recovery"):
            self.nets[name].theta[:] = other.nets[name].theta
        self.safety_t = self.nets["safety"].copy()
