"""Energy tank and passivity layer.

The tank flow is the negative spring power at the interaction port,
``flow = -(K dp) . v``: the tank pays for work the virtual spring does on the
end-effector and is refilled when the end-effector works against the spring.
Draining flows are negative.

Two conditions are enforced per control tick when the layer is on:

* flow condition: draining flows below ``flow_min`` are scaled by
  ``alpha = flow_min / flow`` and the same ``alpha`` scales the commanded force;
* tank condition: a flow that would move the tank outside
  ``[e_min, e_max]`` is not applied, and a stiffness increase is refused
  while the tank is depleted.

With the layer off the same quantities are tracked (the tank saturates at
``e_max`` but has no floor) so constraint monitors can observe raw flows.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from ._jit import njit

TRACE_COLUMNS = ("t", "e", "flow_raw", "flow_applied", "alpha", "depleted")


@dataclass(frozen=True)
class TankConfig:
    e_max: float = 6.0
    e_min: float = 0.0
    flow_min: float = -0.5
    enabled_budget: bool = True
    enabled_flow: bool = True

    def __post_init__(self):
        if not self.e_min <= self.e_max:
            raise ValueError(f"e_min={self.e_min} exceeds e_max={self.e_max}")
        if not self.flow_min <= 0.0:
            raise ValueError(f"flow_min={self.flow_min} must be <= 0")

    @property
    def enabled(self):
        return self.enabled_budget or self.enabled_flow

    def disabled(self):
        return replace(self, enabled_budget=False, enabled_flow=False)


@dataclass(frozen=True)
class TankState:
    e: float
    last_flow_raw: float = 0.0
    last_flow_applied: float = 0.0
    alpha: float = 1.0
    depleted: bool = False

    @classmethod
    def full(cls, cfg: TankConfig):
        return cls(e=cfg.e_max)


@njit
def alpha_for_flow(flow_raw, flow_min):
    if flow_raw < flow_min and flow_min <= 0.0:
        alpha = abs(flow_min) / abs(flow_raw)  # +0.0 for a zero limit
        # rounding of the quotient may leave alpha * flow_raw one ulp short of the limit
        while alpha * flow_raw < flow_min:
            alpha = np.nextafter(alpha, 0.0)
        return alpha
    return 1.0


@njit
def stiffness_increases(pxx, pxy, pyy, kxx, kxy, kyy):
    """True if K_new - K_prev has a positive eigenvalue (stiffer in some direction)."""
    a = kxx - pxx
    b = kxy - pxy
    c = kyy - pyy
    half = 0.5 * (a - c)
    return 0.5 * (a + c) + math.sqrt(half * half + b * b) > 0.0


@njit
def integrate_tank(e, flow_raw, alpha, dt, e_min, e_max, budget_on):
    """Returns (e_new, applied_flow)."""
    applied = alpha * flow_raw
    pred = e + applied * dt
    if budget_on:
        if e_min <= pred <= e_max:
            return pred, applied
        return e, 0.0
    if pred > e_max:
        return e_max, applied
    return pred, applied


@njit
def layer_tick(kxx, kxy, kyy, pxx, pxy, pyy, dx, dy, vx, vy, e, dt, e_min, e_max, flow_min, budget_on, flow_on):
    """One control tick of the passivity layer.

    ``k*`` is the requested stiffness, ``p*`` the stiffness active at the
    previous tick, ``(dx, dy)`` the displacement to equilibrium and
    ``(vx, vy)`` the end-effector velocity.

    Returns (kxx, kxy, kyy, alpha, e_new, flow_raw, flow_applied, depleted).
    """
    raw = -((kxx * dx + kxy * dy) * vx + (kxy * dx + kyy * dy) * vy)
    alpha = alpha_for_flow(raw, flow_min) if flow_on else 1.0
    depleted = e + alpha * raw * dt <= e_min
    if budget_on and depleted and stiffness_increases(pxx, pxy, pyy, kxx, kxy, kyy):
        kxx, kxy, kyy = pxx, pxy, pyy
        raw = -((kxx * dx + kxy * dy) * vx + (kxy * dx + kyy * dy) * vy)
        alpha = alpha_for_flow(raw, flow_min) if flow_on else 1.0
    e_new, applied = integrate_tank(e, raw, alpha, dt, e_min, e_max, budget_on)
    return kxx, kxy, kyy, alpha, e_new, raw, applied, depleted


def spring_power(f, vel):
    """Power ``f . v`` delivered by the spring; the tank flow is its negative."""
    f = np.asarray(f, dtype=float)
    vel = np.asarray(vel, dtype=float)
    return float(f @ vel)


def flow_scale(flow_raw, cfg: TankConfig):
    """Scaling factor that limits a draining flow to ``cfg.flow_min``."""
    return alpha_for_flow(float(flow_raw), float(cfg.flow_min))


def tank_step(state: TankState, flow_raw, dt, cfg: TankConfig):
    """Integrate the tank over one tick of length ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    flow_raw = float(flow_raw)
    alpha = flow_scale(flow_raw, cfg) if cfg.enabled_flow else 1.0
    depleted = state.e + alpha * flow_raw * dt <= cfg.e_min
    e, applied = integrate_tank(state.e, flow_raw, alpha, float(dt), cfg.e_min, cfg.e_max, cfg.enabled_budget)
    return TankState(e=e, last_flow_raw=flow_raw, last_flow_applied=applied, alpha=alpha, depleted=bool(depleted))


def gate_stiffness(depleted, k_prev, k_new):
    """Keep ``k_prev`` when the tank is depleted and ``k_new`` is stiffer in any direction."""
    k_prev = np.asarray(k_prev, dtype=float)
    k_new = np.asarray(k_new, dtype=float)
    if depleted and stiffness_increases(k_prev[0, 0], k_prev[0, 1], k_prev[1, 1], k_new[0, 0], k_new[0, 1], k_new[1, 1]):
        return k_prev
    return k_new


def passivity_layer_step(k_request, k_prev, delta_p, vel, tank: TankState, cfg: TankConfig, dt=1e-3):
    """Filter one tick of the agent's stiffness request.

    Returns ``(k, alpha, new_tank)``; ``alpha`` must scale the commanded
    impedance force. With both layer flags off this is a passthrough that
    still tracks the tank.
    """
    k_request = np.asarray(k_request, dtype=float)
    k_prev = np.asarray(k_prev, dtype=float)
    dx, dy = (float(x) for x in delta_p)
    vx, vy = (float(x) for x in vel)
    kxx, kxy, kyy, alpha, e, raw, applied, depleted = layer_tick(
        k_request[0, 0], k_request[0, 1], k_request[1, 1],
        k_prev[0, 0], k_prev[0, 1], k_prev[1, 1],
        dx, dy, vx, vy, float(tank.e), float(dt),
        cfg.e_min, cfg.e_max, cfg.flow_min, cfg.enabled_budget, cfg.enabled_flow,
    )
    k = np.array([[kxx, kxy], [kxy, kyy]])
    return k, alpha, TankState(e=e, last_flow_raw=raw, last_flow_applied=applied, alpha=alpha, depleted=bool(depleted))
