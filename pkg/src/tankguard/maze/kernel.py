"""Per-tick inner loop: penalty contacts, impedance control, passivity layer and
semi-implicit Euler integration. Compiled with numba when available."""
import math

import numpy as np

from .._jit import njit
from ..control_core import damping_world
from ..passivity import layer_tick

# trace columns written per tick
TRACE_FIELDS = (
    "px", "py", "vx", "vy", "fx", "fy", "kxx", "kxy", "kyy",
    "e", "flow_raw", "flow_applied", "alpha", "depleted",
    "viol_force", "viol_tank", "viol_flow",
)
N_TRACE = len(TRACE_FIELDS)

# params vector layout
P_DT, P_MASS, P_ZETA, P_EE_R, P_KC, P_CC, P_DRAG, P_EMIN, P_EMAX, P_FLOWMIN, P_FMAX, P_GX, P_GY, P_GR, P_FRIC = range(15)
N_PARAMS = 15

# status bits returned by run_ticks
S_FORCE, S_TANK, S_FLOW, S_SUCCESS, S_NONFINITE = 1, 2, 4, 8, 16


@njit
def rect_contact(px, py, vx, vy, r, x0, y0, x1, y1, kc, cc):
    """Penalty force on a disc of radius ``r`` from an axis-aligned wall."""
    cx = min(max(px, x0), x1)
    cy = min(max(py, y0), y1)
    dx = px - cx
    dy = py - cy
    d2 = dx * dx + dy * dy
    if d2 >= r * r:
        return 0.0, 0.0
    if d2 > 0.0:
        dist = math.sqrt(d2)
        nx = dx / dist
        ny = dy / dist
        depth = r - dist
    else:
        # center inside the wall: push out through the nearest face
        exits = (px - x0, x1 - px, py - y0, y1 - py)
        k = 0
        for i in range(1, 4):
            if exits[i] < exits[k]:
                k = i
        nx = (-1.0, 1.0, 0.0, 0.0)[k]
        ny = (0.0, 0.0, -1.0, 1.0)[k]
        depth = r + exits[k]
    mag = kc * depth - cc * (vx * nx + vy * ny)
    if mag <= 0.0:
        return 0.0, 0.0
    return mag * nx, mag * ny


@njit
def disc_contact(ax, ay, avx, avy, ar, bx, by, bvx, bvy, br, kc, cc):
    """Penalty force on disc a from disc b (b receives the negative)."""
    dx = ax - bx
    dy = ay - by
    rr = ar + br
    d2 = dx * dx + dy * dy
    if d2 >= rr * rr or d2 == 0.0:
        return 0.0, 0.0
    dist = math.sqrt(d2)
    nx = dx / dist
    ny = dy / dist
    depth = rr - dist
    mag = kc * depth - cc * ((avx - bvx) * nx + (avy - bvy) * ny)
    if mag <= 0.0:
        return 0.0, 0.0
    return mag * nx, mag * ny


@njit
def contact_forces_into(ee, obs, radii, walls, ee_r, kc, cc, f_obs, f_ee_from_obs):
    """Contact forces at the current state.

    Returns the total force on the end-effector; ``f_obs[j]`` receives the
    total contact force on obstacle j and ``f_ee_from_obs[j]`` the part of
    the end-effector force exerted by obstacle j.
    """
    fx = 0.0
    fy = 0.0
    for w in range(walls.shape[0]):
        gx, gy = rect_contact(ee[0], ee[1], ee[2], ee[3], ee_r,
                              walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3], kc, cc)
        fx += gx
        fy += gy
    n = obs.shape[0]
    for j in range(n):
        f_obs[j, 0] = 0.0
        f_obs[j, 1] = 0.0
    for j in range(n):
        gx, gy = disc_contact(ee[0], ee[1], ee[2], ee[3], ee_r,
                              obs[j, 0], obs[j, 1], obs[j, 2], obs[j, 3], radii[j], kc, cc)
        f_ee_from_obs[j, 0] = gx
        f_ee_from_obs[j, 1] = gy
        fx += gx
        fy += gy
        f_obs[j, 0] -= gx
        f_obs[j, 1] -= gy
        for w in range(walls.shape[0]):
            gx, gy = rect_contact(obs[j, 0], obs[j, 1], obs[j, 2], obs[j, 3], radii[j],
                                  walls[w, 0], walls[w, 1], walls[w, 2], walls[w, 3], kc, cc)
            f_obs[j, 0] += gx
            f_obs[j, 1] += gy
        for i in range(j + 1, n):
            gx, gy = disc_contact(obs[j, 0], obs[j, 1], obs[j, 2], obs[j, 3], radii[j],
                                  obs[i, 0], obs[i, 1], obs[i, 2], obs[i, 3], radii[i], kc, cc)
            f_obs[j, 0] += gx
            f_obs[j, 1] += gy
            f_obs[i, 0] -= gx
            f_obs[i, 1] -= gy
    return fx, fy


@njit
def run_ticks(ee, kprev, tank, sensed, obs, radii, masses, walls, eq, kreq, params,
              budget_on, flow_on, stop_force, stop_tank, stop_flow, n_ticks, trace):
    """Advance the simulation by up to ``n_ticks`` control ticks in place.

    ``ee`` = [px, py, vx, vy]; ``kprev`` = active stiffness (kxx, kxy, kyy);
    ``tank`` = [e]; ``sensed`` receives the last contact force on the
    end-effector. ``budget_on`` / ``flow_on`` enable the passivity layer's
    tank and flow filters. The loop stops after a tick where a violation
    flagged by ``stop_*`` fires or the goal is reached.

    Returns (ticks_run, status_bits, max_force_norm, min_e, min_flow).
    """
    dt = params[P_DT]
    m = params[P_MASS]
    n = obs.shape[0]
    f_obs = np.zeros((n, 2))
    f_ee_obs = np.zeros((n, 2))
    status = 0
    fmax_seen = 0.0
    min_e = tank[0]
    min_flow = np.inf
    ticks = 0
    for t in range(n_ticks):
        fcx, fcy = contact_forces_into(ee, obs, radii, walls, params[P_EE_R], params[P_KC], params[P_CC],
                                       f_obs, f_ee_obs)
        fnorm = math.sqrt(fcx * fcx + fcy * fcy)
        dx = eq[0] - ee[0]
        dy = eq[1] - ee[1]
        kxx, kxy, kyy, alpha, e_new, raw, applied, depleted = layer_tick(
            kreq[0], kreq[1], kreq[2], kprev[0], kprev[1], kprev[2],
            dx, dy, ee[2], ee[3], tank[0], dt,
            params[P_EMIN], params[P_EMAX], params[P_FLOWMIN], budget_on, flow_on)
        dxx, dxy, dyy = damping_world(kxx, kxy, kyy, m, params[P_ZETA])
        ux = alpha * ((kxx * dx + kxy * dy) - (dxx * ee[2] + dxy * ee[3]))
        uy = alpha * ((kxy * dx + kyy * dy) - (dxy * ee[2] + dyy * ee[3]))
        viol_tank = e_new < params[P_EMIN]
        viol_flow = applied < params[P_FLOWMIN]
        viol_force = fnorm > params[P_FMAX]
        # integrate end-effector and obstacles
        # plant friction is physical, so alpha does not scale it
        fric = params[P_FRIC]
        ee[2] += (ux + fcx - fric * ee[2]) / m * dt
        ee[3] += (uy + fcy - fric * ee[3]) / m * dt
        ee[0] += ee[2] * dt
        ee[1] += ee[3] * dt
        drag = params[P_DRAG]
        for j in range(n):
            obs[j, 2] += (f_obs[j, 0] - drag * obs[j, 2]) / masses[j] * dt
            obs[j, 3] += (f_obs[j, 1] - drag * obs[j, 3]) / masses[j] * dt
            obs[j, 0] += obs[j, 2] * dt
            obs[j, 1] += obs[j, 3] * dt
        kprev[0] = kxx
        kprev[1] = kxy
        kprev[2] = kyy
        tank[0] = e_new
        sensed[0] = fcx
        sensed[1] = fcy
        if fnorm > fmax_seen:
            fmax_seen = fnorm
        if e_new < min_e:
            min_e = e_new
        if applied < min_flow:
            min_flow = applied
        trace[t, 0] = ee[0]
        trace[t, 1] = ee[1]
        trace[t, 2] = ee[2]
        trace[t, 3] = ee[3]
        trace[t, 4] = fcx
        trace[t, 5] = fcy
        trace[t, 6] = kxx
        trace[t, 7] = kxy
        trace[t, 8] = kyy
        trace[t, 9] = e_new
        trace[t, 10] = raw
        trace[t, 11] = applied
        trace[t, 12] = alpha
        trace[t, 13] = 1.0 if depleted else 0.0
        trace[t, 14] = 1.0 if viol_force else 0.0
        trace[t, 15] = 1.0 if viol_tank else 0.0
        trace[t, 16] = 1.0 if viol_flow else 0.0
        ticks = t + 1
        if viol_force:
            status |= S_FORCE
        if viol_tank:
            status |= S_TANK
        if viol_flow:
            status |= S_FLOW
        gx = ee[0] - params[P_GX]
        gy = ee[1] - params[P_GY]
        if gx * gx + gy * gy <= params[P_GR] * params[P_GR]:
            status |= S_SUCCESS
        if not (math.isfinite(ee[0]) and math.isfinite(ee[1]) and math.isfinite(ee[2]) and math.isfinite(ee[3])):
            status |= S_NONFINITE
            break
        if (stop_force and viol_force) or (stop_tank and viol_tank) or (stop_flow and viol_flow) or (status & S_SUCCESS):
            break
    return ticks, status, fmax_seen, min_e, min_flow
