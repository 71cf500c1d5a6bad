"""Planar contact-rich maze environment with CMDP reward and constraints."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import EnvConfig, RunConfig
from ..control_core import motion_frame, stiffness_world
from ..passivity import TankState
from . import kernel
from .spec import MazeSpec, load_maze

log = logging.getLogger(__name__)

OBS_DIM = 9
WRENCH_DIM = 6
ACT_DIM = 4

REASON_NONE, REASON_SUCCESS, REASON_VIOLATION, REASON_LIMIT = "", "success", "violation", "limit"


class SimulationError(RuntimeError):
    """Non-finite dynamics; the contact or integration parameters need tuning."""


@dataclass
class SimState:
    p: np.ndarray
    v: np.ndarray
    equilibrium: np.ndarray
    k: np.ndarray
    frame: tuple
    obstacles: np.ndarray
    sensed: np.ndarray
    tank: TankState
    tick: int = 0
    step: int = 0

    def copy(self):
        return SimState(self.p.copy(), self.v.copy(), self.equilibrium.copy(), self.k.copy(), self.frame,
                        self.obstacles.copy(), self.sensed.copy(), self.tank, self.tick, self.step)

    def equals(self, other):
        """Bitwise equality of every field."""
        arrays = ("p", "v", "equilibrium", "k", "obstacles", "sensed")
        return (all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
                and self.frame == other.frame and self.tank == other.tank
                and self.tick == other.tick and self.step == other.step)


@dataclass
class StepOutcome:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


def wrench_observation(obs):
    """The 6-dim wrench part of a 9-dim observation."""
    return obs[..., :WRENCH_DIM]


class MazeEnv:
    """One environment instance per episode worker.

    Actions are physical ``[dp_x, dp_y, k1, k2]`` (m, m, N/m, N/m); see
    :meth:`action_from_unit` for the normalized mapping used by the agents.
    The observation is ``[fx, fy, fz, mx, my, mz, px, py, pz]`` where the
    out-of-plane entries are zero.
    """

    def __init__(self, maze="canonical", run: RunConfig | None = None, cfg: EnvConfig | None = None):
        self.spec: MazeSpec = load_maze(maze)
        self.run = run or RunConfig(maze=self.spec.name)
        self.cfg = cfg or EnvConfig()
        self.limit = self.cfg.episode_limit or self.spec.episode_limit
        self._walls = self.spec.wall_array()
        obs0, self._radii, self._masses = self.spec.obstacle_arrays()
        self._obs0 = obs0
        c, r = self.cfg, self.run
        self._params = np.zeros(kernel.N_PARAMS)
        self._params[kernel.P_DT] = c.dt
        self._params[kernel.P_MASS] = c.mass
        self._params[kernel.P_ZETA] = c.zeta
        self._params[kernel.P_EE_R] = c.ee_radius
        self._params[kernel.P_KC] = c.contact_stiffness
        self._params[kernel.P_CC] = c.contact_damping
        self._params[kernel.P_DRAG] = c.obstacle_drag
        self._params[kernel.P_EMIN] = r.e_min
        self._params[kernel.P_EMAX] = r.e_max
        self._params[kernel.P_FLOWMIN] = r.flow_min
        self._params[kernel.P_FMAX] = r.f_max
        self._params[kernel.P_GX], self._params[kernel.P_GY] = self.spec.goal
        self._params[kernel.P_GR] = self.spec.goal_radius
        self._params[kernel.P_FRIC] = c.plant_friction
        self._stop_energy = not r.monitor_only
        self._trace_buf = np.zeros((c.ticks_per_step, kernel.N_TRACE))
        self.record = False
        self.trace: list = []
        self.state: SimState | None = None
        self.rng = np.random.default_rng(0)
        self.clipped_actions = 0

    # -- actions ---------------------------------------------------------
    def action_bounds(self):
        c = self.cfg
        lo = np.array([-c.dp_max, -c.dp_max, c.k_min, c.k_min])
        hi = np.array([c.dp_max, c.dp_max, c.k_max, c.k_max])
        return lo, hi

    def action_from_unit(self, u):
        """Map ``u`` in [-1, 1]^4 to a physical action."""
        lo, hi = self.action_bounds()
        u = np.clip(np.asarray(u, dtype=float), -1.0, 1.0)
        return lo + 0.5 * (u + 1.0) * (hi - lo)

    def action_to_unit(self, a):
        lo, hi = self.action_bounds()
        return 2.0 * (np.asarray(a, dtype=float) - lo) / (hi - lo) - 1.0

    def sample_action(self, rng):
        lo, hi = self.action_bounds()
        return rng.uniform(lo, hi)

    # -- lifecycle -------------------------------------------------------
    def reset(self, seed=None, start=None, jitter=None):
        """Start an episode. Deterministic in ``(maze, seed, start)``."""
        self.rng = np.random.default_rng(seed)
        jitter = self.cfg.start_jitter if jitter is None else jitter
        base = np.array(self.spec.start if start is None else start, dtype=float)
        if jitter > 0:
            rad = jitter * math.sqrt(self.rng.uniform())
            ang = self.rng.uniform(0.0, 2.0 * math.pi)
            p = base + rad * np.array([math.cos(ang), math.sin(ang)])
        else:
            p = base
        k0 = self.cfg.k_init
        self.state = SimState(
            p=p, v=np.zeros(2), equilibrium=p.copy(), k=np.array([[k0, 0.0], [0.0, k0]]), frame=(1.0, 0.0),
            obstacles=self._obs0.copy(), sensed=np.zeros(2), tank=TankState(e=self.run.e_max),
        )
        self.trace = []
        self.clipped_actions = 0
        return self.observe()

    def observe(self):
        s = self.state
        f = s.sensed
        if self.cfg.sensor_noise > 0:
            f = f + self.rng.normal(0.0, self.cfg.sensor_noise, size=2)
        return np.array([f[0], f[1], 0.0, 0.0, 0.0, 0.0, s.p[0], s.p[1], 0.0])

    def step(self, action):
        s = self.state
        if s is None:
            raise RuntimeError("reset() must be called before step()")
        a = np.asarray(action, dtype=float).reshape(-1)
        if a.shape != (ACT_DIM,) or not np.all(np.isfinite(a)):
            raise ValueError(f"action must be a finite 4-vector, got {action!r}")
        lo, hi = self.action_bounds()
        clipped = np.clip(a, lo, hi)
        if not np.array_equal(clipped, a):
            self.clipped_actions += 1
            log.debug("action %s clipped to bounds", a)
        a = clipped
        dp = a[:2]
        frame = motion_frame(dp[0], dp[1], s.frame[0], s.frame[1])
        kreq = np.array(stiffness_world(a[2], a[3], frame[0], frame[1]))
        eq = s.p + dp

        ee = np.array([s.p[0], s.p[1], s.v[0], s.v[1]])
        kprev = np.array([s.k[0, 0], s.k[0, 1], s.k[1, 1]])
        tank = np.array([s.tank.e])
        sensed = s.sensed.copy()
        obs = s.obstacles.copy()
        r = self.run
        ticks, status, fpeak, min_e, min_flow = kernel.run_ticks(
            ee, kprev, tank, sensed, obs, self._radii, self._masses, self._walls, eq, kreq, self._params,
            r.layer, r.layer, True, r.budget_constraint and self._stop_energy,
            r.flow_constraint and self._stop_energy, self.cfg.ticks_per_step, self._trace_buf)
        if status & kernel.S_NONFINITE:
            raise SimulationError(f"non-finite state at step {s.step}, tick {s.tick + ticks}: ee={ee}")

        last = self._trace_buf[ticks - 1]
        s.p = ee[:2].copy()
        s.v = ee[2:].copy()
        s.equilibrium = eq
        s.k = np.array([[kprev[0], kprev[1]], [kprev[1], kprev[2]]])
        s.frame = frame
        s.obstacles = obs
        s.sensed = sensed
        s.tank = TankState(e=float(tank[0]), last_flow_raw=float(last[10]), last_flow_applied=float(last[11]),
                           alpha=float(last[12]), depleted=bool(last[13]))
        if self.record:
            rows = self._trace_buf[:ticks].copy()
            self.trace.append((s.step, s.tick, a.copy(), rows))
        s.tick += ticks
        s.step += 1

        hit_force = bool(status & kernel.S_FORCE)
        hit_tank = bool(status & kernel.S_TANK)
        hit_flow = bool(status & kernel.S_FLOW)
        violated_force = hit_force
        violated_tank = hit_tank and r.budget_constraint
        violated_flow = hit_flow and r.flow_constraint
        terminal_violation = violated_force or ((violated_tank or violated_flow) and self._stop_energy)
        success = bool(status & kernel.S_SUCCESS) and not terminal_violation

        dist = float(np.hypot(*(s.p - np.asarray(self.spec.goal))))
        reward = self.cfg.r_pos * dist
        if violated_force:
            reward += self.cfg.r_col
        if success:
            reward += self.cfg.r_goal

        if terminal_violation:
            reason = REASON_VIOLATION
        elif success:
            reason = REASON_SUCCESS
        elif s.step >= self.limit:
            reason = REASON_LIMIT
        else:
            reason = REASON_NONE
        info = {
            "violated_force": violated_force,
            "violated_tank": violated_tank,
            "violated_flow": violated_flow,
            "monitor_tank": hit_tank,
            "monitor_flow": hit_flow,
            "success": success,
            "reason": reason,
            "truncated": reason == REASON_LIMIT,
            "ticks": ticks,
            "peak_force": fpeak,
            "min_tank": min_e,
            "min_flow": min_flow,
            "tank": s.tank.e,
            "action": a,
        }
        return StepOutcome(self.observe(), float(reward), reason != REASON_NONE, info)


def contact_forces(p, v, obstacles, spec, cfg: EnvConfig | None = None):
    """Contact forces at a single instant.

    ``obstacles`` is an ``(n, 4)`` array of obstacle positions and velocities.
    Returns ``(f_ee, f_obstacles, f_ee_by_obstacle)``: the total contact
    force on the end-effector (the sensed wrench), the total contact force
    on each obstacle, and each obstacle's share of ``f_ee``.
    """
    cfg = cfg or EnvConfig()
    spec = load_maze(spec)
    obstacles = np.asarray(obstacles, dtype=float).reshape(-1, 4)
    _, radii, _ = spec.obstacle_arrays()
    ee = np.array([p[0], p[1], v[0], v[1]], dtype=float)
    f_obs = np.zeros((obstacles.shape[0], 2))
    f_ee_obs = np.zeros((obstacles.shape[0], 2))
    fx, fy = kernel.contact_forces_into(ee, obstacles, radii, spec.wall_array(), cfg.ee_radius,
                                        cfg.contact_stiffness, cfg.contact_damping, f_obs, f_ee_obs)
    return np.array([fx, fy]), f_obs, f_ee_obs
