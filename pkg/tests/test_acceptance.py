"""Acceptance criteria AC1-AC10.

Each test records one ``ACn PASS|FAIL ...`` line that is printed in the
terminal summary. The learning criteria share session-scoped training runs
on the straight-corridor maze at desk scale (64-unit networks).
"""
import math
import shutil
import time

import numpy as np
import pytest

from tankguard.approximator import Mlp
from tankguard.config import DEPLOY_E_MAX, DEPLOY_FLOW_MIN, RunConfig
from tankguard.control_core import map_action_stiffness, motion_frame, stiffness_world
from tankguard.harness import cli
from tankguard.maze import MazeEnv
from tankguard.passivity import TankConfig, flow_scale
from tankguard.safe_rl import SafeSac, TrainConfig, collect_offline, evaluate, pretrain_safety, safety_auc, train
from tankguard.safe_rl.offline import split

from .gradcheck import ARCHITECTURES, max_rel_error
from .test_passivity import _prescribed_motion

TOL = 1e-12
SEEDS = (0, 1, 2)
MAZE = "corridor"
TRAIN = TrainConfig(hidden=(64, 64), batch_size=128, episodes=300, warmup_steps=300, offline_tuples=20_000,
                    pretrain_steps=3000)


def record(report, ac, ok, detail):
    line = f"{ac} {'PASS' if ok else 'FAIL'} {detail}"
    print(line)
    report.append(line)


class Trained:
    """Lazily trained (run config, seed) pairs shared across criteria."""

    def __init__(self):
        self.runs = {}
        self.seconds = {}

    def get(self, name, seed):
        key = (name, seed)
        if key not in self.runs:
            t0 = time.perf_counter()
            self.runs[key] = train(RunConfig.from_name(name, maze=MAZE, seed=seed), TRAIN)
            self.seconds[key] = time.perf_counter() - t0
        return self.runs[key]


@pytest.fixture(scope="session")
def trained():
    return Trained()


def deployment(layer):
    return RunConfig.deployment(maze=MAZE, layer=layer)


# -- AC1 ----------------------------------------------------------------------

def _tick_bounds(traces):
    e = np.concatenate([t["e"] for t in traces])
    flow = np.concatenate([t["flow_applied"] for t in traces])
    return e.min(), e.max(), flow.min(), e.size


def _random_policy_traces(episodes, seed):
    env = MazeEnv(MAZE, deployment(True))
    rng = np.random.default_rng(seed)
    env.record = True
    out = []
    for ep in range(episodes):
        env.reset(seed=[seed, ep])
        e0 = env.state.tank.e
        while not env.step(env.sample_action(rng)).done:
            pass
        rows = np.concatenate([t[3] for t in env.trace])
        out.append({"e": np.concatenate([[e0], rows[:, 9]]), "flow_applied": rows[:, 11]})
    return out


def test_ac1_passivity_layer_hard_guarantee(trained, acceptance_report):
    agnostic = trained.get("agnostic", 0).agent
    eb = trained.get("Eb8", 0).agent
    t0 = time.perf_counter()
    sets = {"random": _random_policy_traces(100, 11)}
    for label, agent in (("agnostic", agnostic), ("Eb8", eb)):
        res = evaluate(agent, deployment(True), episodes=100, seed=11, deterministic=False, trace=True)
        sets[label] = res.traces
    elapsed = time.perf_counter() - t0
    ok = elapsed < 120
    parts = []
    for label, traces in sets.items():
        e_lo, e_hi, f_lo, n = _tick_bounds(traces)
        good = e_lo >= -TOL and e_hi <= DEPLOY_E_MAX + TOL and f_lo >= DEPLOY_FLOW_MIN - TOL
        ok &= bool(good) and len(traces) >= 100
        parts.append(f"{label}: {len(traces)} eps {n} ticks e in [{e_lo:.3g}, {e_hi:.3g}] min flow {f_lo:.3g}")
    record(acceptance_report, "AC1", ok, "; ".join(parts) + f" ({elapsed:.1f} s)")
    assert ok


# -- AC2 ----------------------------------------------------------------------

def test_ac2_flow_scaling_law(acceptance_report):
    rng = np.random.default_rng(2)
    n = 100_000
    # log-uniform magnitudes across many decades, both signs, plus exact edge cases
    flows = np.sign(rng.uniform(-1, 1, n)) * 10.0 ** rng.uniform(-12, 6, n)
    limits = -(10.0 ** rng.uniform(-12, 6, n))
    limits[::97] = 0.0
    flows[::101] = limits[::101]
    flows[::103] = 0.0
    cfgs = [TankConfig(flow_min=lim) for lim in limits.tolist()]
    flow_scale(-1.0, cfgs[0])  # compile outside the timed loop
    t0 = time.perf_counter()
    alphas = [flow_scale(f, c) for f, c in zip(flows.tolist(), cfgs)]
    elapsed = time.perf_counter() - t0
    bad = 0
    for f, lim, a in zip(flows.tolist(), limits.tolist(), alphas):
        if f < lim <= 0.0:
            bad += not (a * f >= lim and a >= 0.0)
        else:
            bad += a != 1.0
    ok = bad == 0 and elapsed < 1.0
    record(acceptance_report, "AC2", ok, f"{n} pairs, {bad} violations of the law ({elapsed:.2f} s)")
    assert ok


# -- AC3 ----------------------------------------------------------------------

def test_ac3_energy_accounting_oracle(acceptance_report):
    t0 = time.perf_counter()
    worst = 0.0
    for k1, k2, angle in ((500, 500, 0.0), (1000, 300, 0.7), (300, 800, 2.5)):
        k = map_action_stiffness(k1, k2, (math.cos(angle), math.sin(angle)))
        de, du, _ = _prescribed_motion(k, np.zeros(2), (0.01, 0.0), np.array([0.05, -0.02]), 0.5, 1e-3)
        worst = max(worst, abs(de - du))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-3 and elapsed < 1.0
    record(acceptance_report, "AC3", ok, f"max |tank change - spring potential change| = {worst:.3g} J "
                                         f"({elapsed:.2f} s)")
    assert ok


# -- AC4 ----------------------------------------------------------------------

def _increase(prev, req):
    diff = np.array([[req[0] - prev[0], req[1] - prev[1]], [req[1] - prev[1], req[2] - prev[2]]])
    return np.linalg.eigvalsh(diff)[-1] > 0.0


def test_ac4_stiffness_hold_after_depletion(acceptance_report):
    # a small tank and an inactive flow limit, so only the budget rule acts
    run = RunConfig(maze=MAZE, layer=True, e_max=0.2, flow_min=-1e9)
    env = MazeEnv(MAZE, run)
    lo, hi = env.action_bounds()
    rng = np.random.default_rng(4)
    counts = {"held": 0, "passed_decrease": 0, "free": 0}
    bad = 0
    dt = env.cfg.dt
    for ep in range(5):
        env.reset(seed=[4, ep])
        env.record = True
        done = False
        while not done:
            s = env.state
            p0, v0, e0 = s.p.copy(), s.v.copy(), s.tank.e
            k0 = (s.k[0, 0], s.k[0, 1], s.k[1, 1])
            frame0 = s.frame
            a = rng.uniform(lo, hi)
            done = env.step(a).done
            _, _, a_used, rows = env.trace[-1]
            c, sn = motion_frame(a_used[0], a_used[1], frame0[0], frame0[1])
            req = stiffness_world(a_used[2], a_used[3], c, sn)
            eq = p0 + a_used[:2]
            for t in range(rows.shape[0]):
                if t == 0:
                    px, py, vx, vy, e, prev = p0[0], p0[1], v0[0], v0[1], e0, k0
                else:
                    px, py, vx, vy = rows[t - 1, 0:4]
                    e, prev = rows[t - 1, 9], tuple(rows[t - 1, 6:9])
                dx, dy = eq[0] - px, eq[1] - py
                raw = -((req[0] * dx + req[1] * dy) * vx + (req[1] * dx + req[2] * dy) * vy)
                depleted = e + raw * dt <= run.e_min
                k = tuple(rows[t, 6:9])
                if depleted and _increase(prev, req):
                    counts["held"] += 1
                    bad += k != prev
                elif depleted:
                    counts["passed_decrease"] += 1
                    bad += k != tuple(req)
                else:
                    counts["free"] += 1
                    bad += k != tuple(req)
            env.trace = []
    ok = bad == 0 and counts["held"] > 0 and counts["passed_decrease"] > 0
    record(acceptance_report, "AC4", ok, f"{counts['held']} held increase ticks, {counts['passed_decrease']} "
                                         f"passed non-increase ticks while depleted, {bad} mismatches")
    assert ok


# -- AC5 ----------------------------------------------------------------------

def test_ac5_gradient_correctness(acceptance_report):
    rng = np.random.default_rng(5)
    t0 = time.perf_counter()
    worst = {}
    for name, arch in ARCHITECTURES.items():
        worst[name] = 0.0
        for _ in range(10):
            net = Mlp(arch["sizes"], head=arch["head"], rng=rng)
            # non-zero biases so every parameter block sees a generic point
            net.theta += 0.05 * rng.normal(size=net.n_params)
            x = rng.normal(size=(2, arch["sizes"][0]))
            w = rng.normal(size=(2, arch["sizes"][-1]))
            worst[name] = max(worst[name], max_rel_error(net, x, w, n_probe=1000, rng=rng))
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) <= 1e-4 and elapsed < 30
    detail = ", ".join(f"{k} {v:.2g}" for k, v in worst.items())
    record(acceptance_report, "AC5", ok, f"max relative error: {detail} ({elapsed:.1f} s)")
    assert ok


# -- AC6 ----------------------------------------------------------------------

def test_ac6_safety_critic_discrimination(acceptance_report):
    t0 = time.perf_counter()
    data = collect_offline(40_000, maze="canonical", seed=0)
    rate = float(np.mean([t.violated for t in data]))
    fit, held = split(data, holdout=0.2, seed=0)
    agent = SafeSac(TrainConfig(hidden=(64, 64), batch_size=128), seed=0)
    pretrain_safety(agent, fit, seed=0)
    auc = safety_auc(agent, held)
    elapsed = time.perf_counter() - t0
    ok = 0.02 <= rate <= 0.06 and auc >= 0.8 and elapsed < 20 * 60
    record(acceptance_report, "AC6", ok, f"violation rate {rate:.2%} of {len(data)}, held-out AUC {auc:.3f} "
                                         f"({elapsed:.0f} s)")
    assert ok


# -- AC7 ----------------------------------------------------------------------

def test_ac7_learning_smoke_test(trained, acceptance_report):
    rates = []
    for seed in SEEDS:
        log = trained.get("agnostic", seed).log
        assert len(log) == 300
        rates.append(float(np.mean([r["success"] for r in log[-100:]])))
    total = sum(trained.seconds[("agnostic", s)] for s in SEEDS)
    ok = min(rates) >= 0.9 and total < 30 * 60
    record(acceptance_report, "AC7", ok, "final-100 success " + ", ".join(f"{r:.0%}" for r in rates)
           + f" ({total:.0f} s)")
    assert ok


# -- AC8 ----------------------------------------------------------------------

def test_ac8_agnostic_violates_more_than_eb8(trained, acceptance_report):
    t0 = time.perf_counter()
    counts = []
    for seed in SEEDS:
        pair = []
        for name in ("agnostic", "Eb8"):
            res = evaluate(trained.get(name, seed).agent, deployment(False), episodes=100, seed=100 + seed,
                           trace=False)
            pair.append(res.summary["energy_violations"])
        counts.append(pair)
    elapsed = time.perf_counter() - t0
    ok = all(a > b for a, b in counts)
    detail = ", ".join(f"seed {s}: agnostic {a} vs Eb8 {b}" for s, (a, b) in zip(SEEDS, counts))
    record(acceptance_report, "AC8", ok, f"energy-violating episodes per 100: {detail} ({elapsed:.0f} s eval)")
    assert ok


# -- AC9 ----------------------------------------------------------------------

def test_ac9_eb4_keeps_more_budget(trained, acceptance_report):
    ends = {"agnostic": [], "Eb4": []}
    for seed in SEEDS:
        for name in ends:
            res = evaluate(trained.get(name, seed).agent, deployment(True), episodes=100, seed=200 + seed,
                           trace=False)
            ends[name].extend(r["tank_end"] for r in res.rows)
    ag, eb = float(np.mean(ends["agnostic"])), float(np.mean(ends["Eb4"]))
    ok = eb > ag
    record(acceptance_report, "AC9", ok, f"mean tank at episode end (300 episodes): Eb4 {eb:.3f} J vs "
                                         f"agnostic {ag:.3f} J")
    assert ok


# -- AC10 ---------------------------------------------------------------------

def _tree(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*"))
            if p.is_file() and p.name != "timing.csv"}


def test_ac10_repeated_commands_are_bitwise_identical(tmp_path, capsys, acceptance_report):
    cfg = tmp_path / "c.toml"
    cfg.write_text('[run]\nmaze = "corridor"\n[train]\nhidden = [16, 16]\nbatch_size = 32\nepisodes = 4\n'
                   "warmup_steps = 40\noffline_tuples = 300\npretrain_steps = 20\ncheckpoint_every = 2\n"
                   '[eval]\nepisodes = 3\nlog_episodes = 2\n[experiment]\nrun_configs = ["agnostic", "Eb4"]\n'
                   'seeds = [0, 1]\neval_layers = ["on", "off"]\n')
    out = tmp_path / "out"
    trees = []
    for _ in range(2):
        # the identical command lines, run again from scratch in the same place
        if out.exists():
            shutil.rmtree(out)
        assert cli.main(["collect", "--config", str(cfg), "--maze", "canonical", "-n", "500",
                         "--out", str(out / "data")]) == 0
        assert cli.main(["pretrain", str(out / "data" / "dataset.tgds"), "--config", str(cfg),
                         "--out", str(out / "data")]) == 0
        assert cli.main(["experiment", "--config", str(cfg), "--workers", "1", "--out", str(out / "exp")]) == 0
        trees.append(_tree(out))
    capsys.readouterr()
    names = set(trees[0]) | set(trees[1])
    differing = sorted(n for n in names if trees[0].get(n) != trees[1].get(n))
    n_ck = sum(n.endswith(".tgw") for n in trees[0])
    n_log = sum(n.endswith(".csv") for n in trees[0])
    ok = not differing and n_ck > 0 and n_log > 0
    record(acceptance_report, "AC10", ok, f"{len(names)} files ({n_ck} weight files, {n_log} CSV logs), "
                                          f"{len(differing)} differ" + (f": {differing[:5]}" if differing else ""))
    assert ok
